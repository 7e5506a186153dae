#include <doctest.h>

#include "webrep/common.hpp"
#include "webrep/kernels.hpp"
#include "webrep/rng.hpp"

using namespace webrep;

namespace {

Matrix random_matrix(int r, int c, std::uint64_t seed) {
    Matrix m(r, c);
    Rng rng(seed);
    m.fill_normal(rng, 0.0, 1.0);
    return m;
}

// Plain triple-loop oracle, independent of the kernel implementations.
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            out(i, j) = s;
        }
    return out;
}

}  // namespace

TEST_CASE("matmul matches naive oracle") {
    Matrix a = random_matrix(13, 7, 1);
    Matrix b = random_matrix(7, 9, 2);
    Matrix out;
    kernels::serial::matmul(a, b, out);
    Matrix expect = naive_matmul(a, b);
    REQUIRE(out.rows() == 13);
    REQUIRE(out.cols() == 9);
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) CHECK(out(i, j) == doctest::Approx(expect(i, j)).epsilon(1e-12));
}

TEST_CASE("matmul_nt and matmul_tn match transposed oracles") {
    Matrix a = random_matrix(6, 11, 3);
    Matrix b = random_matrix(8, 11, 4);  // b^T is 11x8
    Matrix nt;
    kernels::serial::matmul_nt(a, b, nt);
    Matrix bt(11, 8);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 11; ++j) bt(j, i) = b(i, j);
    Matrix expect = naive_matmul(a, bt);
    for (int i = 0; i < nt.rows(); ++i)
        for (int j = 0; j < nt.cols(); ++j) CHECK(nt(i, j) == doctest::Approx(expect(i, j)).epsilon(1e-12));

    Matrix c = random_matrix(9, 5, 5);  // c^T is 5x9
    Matrix d = random_matrix(9, 4, 6);
    Matrix tn;
    kernels::serial::matmul_tn(c, d, tn);
    Matrix ct(5, 9);
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 5; ++j) ct(j, i) = c(i, j);
    Matrix expect2 = naive_matmul(ct, d);
    for (int i = 0; i < tn.rows(); ++i)
        for (int j = 0; j < tn.cols(); ++j) CHECK(tn(i, j) == doctest::Approx(expect2(i, j)).epsilon(1e-12));
}

TEST_CASE("parallel kernels are bitwise identical to the serial reference") {
    Matrix a = random_matrix(37, 29, 7);
    Matrix b = random_matrix(29, 31, 8);
    Matrix serial_out, parallel_out;
    kernels::serial::matmul(a, b, serial_out);
    for (int threads : {2, 3, 8}) {
        set_num_threads(threads);
        kernels::matmul(a, b, parallel_out);
        CHECK(parallel_out == serial_out);
    }

    Matrix c = random_matrix(24, 16, 9);
    Matrix nt_serial, nt_par, tn_serial, tn_par;
    kernels::serial::matmul_nt(a, random_matrix(5, 29, 10), nt_serial);
    set_num_threads(4);
    kernels::matmul_nt(a, random_matrix(5, 29, 10), nt_par);
    CHECK(nt_par == nt_serial);
    kernels::serial::matmul_tn(c, random_matrix(24, 6, 11), tn_serial);
    kernels::matmul_tn(c, random_matrix(24, 6, 11), tn_par);
    CHECK(tn_par == tn_serial);
    set_num_threads(1);
}

TEST_CASE("dimension mismatch is rejected") {
    Matrix a(3, 4), b(5, 2), out;
    CHECK_THROWS_AS(kernels::matmul(a, b, out), std::invalid_argument);
}

TEST_CASE("derive_seed separates labeled streams") {
    auto a = derive_seed(42, "alpha");
    auto b = derive_seed(42, "beta");
    auto c = derive_seed(43, "alpha");
    CHECK(a != b);
    CHECK(a != c);
    CHECK(derive_seed(42, "alpha") == a);
}

TEST_CASE("rng uniform_index stays in range and shuffle is a permutation") {
    Rng rng(123);
    for (int i = 0; i < 1000; ++i) {
        auto v = rng.uniform_index(7);
        CHECK(v < 7);
    }
    std::vector<int> xs(50);
    for (int i = 0; i < 50; ++i) xs[i] = i;
    rng.shuffle(xs);
    std::vector<int> sorted = xs;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}
