#include "webrep/kernels.hpp"

#include <cmath>
#include <stdexcept>

#include "webrep/common.hpp"

namespace webrep {

namespace {
int g_num_threads = 1;
}

void set_num_threads(int n) { g_num_threads = n < 1 ? 1 : n; }
int num_threads() { return g_num_threads; }

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(const std::string& s, std::uint64_t seed) {
    return fnv1a64(s.data(), s.size(), seed);
}

std::uint64_t derive_seed(std::uint64_t master, const std::string& label) {
    std::uint64_t h = fnv1a64(&master, sizeof(master));
    h = fnv1a64(label, h);
    // splitmix64 finalizer to spread low-entropy labels over the state space
    h += 0x9e3779b97f4a7c15ULL;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    return h ^ (h >> 31);
}

}  // namespace webrep

namespace webrep::kernels {

namespace {

void check_mm(const Matrix& a, const Matrix& b, int ak, int bk, const char* what) {
    if (ak != bk) throw std::invalid_argument(std::string(what) + ": inner dimensions differ");
    (void)a;
    (void)b;
}

inline void matmul_row(const Matrix& a, const Matrix& b, Matrix& out, int i) {
    const int n = b.cols();
    const int k = a.cols();
    double* o = out.row(i);
    for (int j = 0; j < n; ++j) o[j] = 0.0;
    const double* ai = a.row(i);
    for (int p = 0; p < k; ++p) {
        const double av = ai[p];
        const double* bp = b.row(p);
        for (int j = 0; j < n; ++j) o[j] += av * bp[j];
    }
}

inline void matmul_nt_row(const Matrix& a, const Matrix& b, Matrix& out, int i) {
    const int n = b.rows();
    const int k = a.cols();
    const double* ai = a.row(i);
    double* o = out.row(i);
    for (int j = 0; j < n; ++j) o[j] = dot(ai, b.row(j), k);
}

inline void matmul_tn_row(const Matrix& a, const Matrix& b, Matrix& out, int i) {
    // out(i,:) = sum_p a(p,i) * b(p,:)
    const int n = b.cols();
    const int m = a.rows();
    double* o = out.row(i);
    for (int j = 0; j < n; ++j) o[j] = 0.0;
    for (int p = 0; p < m; ++p) {
        const double av = a(p, i);
        const double* bp = b.row(p);
        for (int j = 0; j < n; ++j) o[j] += av * bp[j];
    }
}

}  // namespace

double dot(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double norm(const double* a, int n) { return std::sqrt(dot(a, a, n)); }

namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
    check_mm(a, b, a.cols(), b.rows(), "matmul");
    out = Matrix(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) matmul_row(a, b, out, i);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
    check_mm(a, b, a.cols(), b.cols(), "matmul_nt");
    out = Matrix(a.rows(), b.rows());
    for (int i = 0; i < a.rows(); ++i) matmul_nt_row(a, b, out, i);
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
    check_mm(a, b, a.rows(), b.rows(), "matmul_tn");
    out = Matrix(a.cols(), b.cols());
    for (int i = 0; i < a.cols(); ++i) matmul_tn_row(a, b, out, i);
}

}  // namespace serial

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
    if (num_threads() == 1) {
        serial::matmul(a, b, out);
        return;
    }
    check_mm(a, b, a.cols(), b.rows(), "matmul");
    out = Matrix(a.rows(), b.cols());
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (int i = 0; i < a.rows(); ++i) matmul_row(a, b, out, i);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
    if (num_threads() == 1) {
        serial::matmul_nt(a, b, out);
        return;
    }
    check_mm(a, b, a.cols(), b.cols(), "matmul_nt");
    out = Matrix(a.rows(), b.rows());
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (int i = 0; i < a.rows(); ++i) matmul_nt_row(a, b, out, i);
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
    if (num_threads() == 1) {
        serial::matmul_tn(a, b, out);
        return;
    }
    check_mm(a, b, a.rows(), b.rows(), "matmul_tn");
    out = Matrix(a.cols(), b.cols());
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (int i = 0; i < a.cols(); ++i) matmul_tn_row(a, b, out, i);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out;
    matmul(a, b, out);
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    Matrix out;
    matmul_nt(a, b, out);
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    Matrix out;
    matmul_tn(a, b, out);
    return out;
}

}  // namespace webrep::kernels
