#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "webrep/common.hpp"
#include "webrep/matrix.hpp"

namespace webrep {

// Adam with bias correction. Parameter/gradient tensors are passed as
// parallel lists in a fixed order; moment buffers are lazily shaped on the
// first step.
class AdamOptimizer {
public:
    explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads) {
        if (params.size() != grads.size()) throw ValidationError("adam: param/grad list mismatch");
        if (m_.empty()) {
            for (auto* p : params) {
                m_.emplace_back(p->rows(), p->cols());
                v_.emplace_back(p->rows(), p->cols());
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Matrix& p = *params[i];
            const Matrix& g = *grads[i];
            if (!p.same_shape(g) || !p.same_shape(m_[i]))
                throw ValidationError("adam: tensor shape changed between steps");
            double* pd = p.data();
            const double* gd = g.data();
            double* md = m_[i].data();
            double* vd = v_[i].data();
            for (std::size_t j = 0; j < p.size(); ++j) {
                md[j] = beta1_ * md[j] + (1.0 - beta1_) * gd[j];
                vd[j] = beta2_ * vd[j] + (1.0 - beta2_) * gd[j] * gd[j];
                double mhat = md[j] / bc1;
                double vhat = vd[j] / bc2;
                pd[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    std::int64_t steps_taken() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<Matrix> m_, v_;
};

}  // namespace webrep
