#pragma once

#include "webrep/matrix.hpp"

namespace webrep::kernels {

// Serial reference implementations. Kept simple and obviously correct; the
// parallel versions below must produce bitwise-identical results because they
// split work by output row without changing per-element summation order.
namespace serial {

// out = a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
// out = a * b^T
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
// out = a^T * b
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);

}  // namespace serial

// OpenMP versions. Dispatch to the serial path when num_threads() == 1.
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// Small shared helpers.
double dot(const double* a, const double* b, int n);
double norm(const double* a, int n);

}  // namespace webrep::kernels
