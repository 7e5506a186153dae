#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

#include "webrep/rng.hpp"

namespace webrep {

// Dense row-major matrix of doubles. Everything in the numeric core works on
// this one type; vectors are 1 x n or n x 1 matrices or plain std::vector.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double* row(int i) { return data_.data() + static_cast<std::size_t>(i) * cols_; }
    const double* row(int i) const { return data_.data() + static_cast<std::size_t>(i) * cols_; }

    double& operator()(int i, int j) {
        assert(i >= 0 && i < rows_ && j >= 0 && j < cols_);
        return data_[static_cast<std::size_t>(i) * cols_ + j];
    }
    double operator()(int i, int j) const {
        assert(i >= 0 && i < rows_ && j >= 0 && j < cols_);
        return data_[static_cast<std::size_t>(i) * cols_ + j];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(0.0); }

    void fill_normal(Rng& rng, double mean, double stddev) {
        for (auto& x : data_) x = rng.normal(mean, stddev);
    }
    void fill_uniform(Rng& rng, double lo, double hi) {
        for (auto& x : data_) x = rng.uniform(lo, hi);
    }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

}  // namespace webrep
