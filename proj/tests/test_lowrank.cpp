#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "qtt/errors.hpp"
#include "qtt/lowrank.hpp"
#include "test_support.hpp"

using namespace qtt;

namespace {

DenseMatrix diag(std::vector<double> d, std::size_t rows, std::size_t cols) {
    DenseMatrix m(rows, cols);
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

Eigen::Map<const Eigen::MatrixXd> eig(const DenseMatrix& m) {
    return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

double orthonormality_defect(const DenseMatrix& q) {
    auto e = eig(q);
    Eigen::MatrixXd g = e.transpose() * e - Eigen::MatrixXd::Identity(e.cols(), e.cols());
    return g.cwiseAbs().maxCoeff();
}

Eigen::MatrixXd reconstruct(const TruncatedSVD& s) {
    Eigen::VectorXd sv = Eigen::Map<const Eigen::VectorXd>(s.singular_values.data(), s.rank());
    return eig(s.U) * sv.asDiagonal() * eig(s.V).transpose();
}

}  // namespace

TEST_CASE("truncation_rank follows the tail rule") {
    std::vector<double> s{3, 2, 1e-9};
    CHECK(truncation_rank(s, 1e-6) == 2);
    CHECK(truncation_rank(s, 0.0) == 3);
    CHECK(truncation_rank(s, 100.0) == 1);
    // tail of rank 1 is exactly sqrt(4 + 0) when the last value is zero; ties keep smaller rank
    std::vector<double> t{3, 2, 0};
    CHECK(truncation_rank(t, 2.0) == 1);
    CHECK(truncation_rank(t, 0.0) == 2);
}

TEST_CASE("truncated_svd on a diagonal matrix") {
    auto m = diag({3, 2, 1e-9}, 3, 3);
    auto s = truncated_svd(m, 1e-6);
    REQUIRE(s.rank() == 2);
    CHECK(s.singular_values[0] == doctest::Approx(3.0));
    CHECK(s.singular_values[1] == doctest::Approx(2.0));
    CHECK(s.discarded_energy == doctest::Approx(1e-9).epsilon(1e-6));
    CHECK(s.U.rows() == 3);
    CHECK(s.V.rows() == 3);
}

TEST_CASE("truncated_svd error equals discarded energy (random property)") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        std::size_t rows = 2 + rng() % 20, cols = 2 + rng() % 20;
        auto m = test::random_matrix(rows, cols, rng);
        double delta = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * frobenius_norm(m);
        auto s = truncated_svd(m, delta);
        double err = (eig(m) - reconstruct(s)).norm();
        CHECK(err <= delta + 1e-12 * frobenius_norm(m));
        CHECK(err == doctest::Approx(s.discarded_energy).epsilon(1e-8).scale(frobenius_norm(m)));
        CHECK(orthonormality_defect(s.U) < 1e-12);
        CHECK(orthonormality_defect(s.V) < 1e-12);
        for (std::size_t i = 1; i < s.rank(); ++i) CHECK(s.singular_values[i] <= s.singular_values[i - 1]);
        // minimality: dropping one more would exceed delta
        if (s.rank() > 1) {
            double sq = s.discarded_energy * s.discarded_energy +
                        s.singular_values.back() * s.singular_values.back();
            CHECK(std::sqrt(sq) > delta);
        }
    }
}

TEST_CASE("truncated_svd edge cases") {
    auto z = truncated_svd(DenseMatrix(4, 3), 0.0);
    CHECK(z.rank() == 1);
    CHECK(z.singular_values[0] == 0.0);

    DenseMatrix bad(2, 2, {1, 2, std::nan(""), 4});
    CHECK_THROWS_AS(truncated_svd(bad, 0.0), DataError);
    DenseMatrix inf(2, 2, {1, 2, INFINITY, 4});
    CHECK_THROWS_AS(truncated_svd(inf, 0.0), DataError);
}

TEST_CASE("rank_revealing_qr detects rank 1") {
    DenseMatrix m(2, 2, {1, 2, 2, 4});  // [[1,2],[2,4]]
    auto qr = rank_revealing_qr(m);
    CHECK(qr.rank == 1);
    CHECK(qr.Q.cols() == 1);
    CHECK(qr.R.rows() == 1);
    CHECK((eig(qr.Q) * eig(qr.R) - eig(m)).norm() < 1e-12);
}

TEST_CASE("rank_revealing_qr reconstructs low-rank products") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t rows = 3 + rng() % 15, cols = 3 + rng() % 15;
        std::size_t r = 1 + rng() % std::min(rows, cols);
        auto a = test::random_matrix(rows, r, rng);
        auto b = test::random_matrix(r, cols, rng);
        auto m = multiply(a, b);
        auto qr = rank_revealing_qr(m);
        CHECK(qr.rank == r);
        CHECK((eig(qr.Q) * eig(qr.R) - eig(m)).norm() < 1e-12 * (1 + frobenius_norm(m)));
        CHECK(orthonormality_defect(qr.Q) < 1e-12);
        // R_pivoted is upper triangular and matches R column-wise through the pivots
        for (std::size_t j = 0; j < cols; ++j) {
            for (std::size_t i = j + 1; i < qr.rank; ++i) CHECK(qr.R_pivoted(i, j) == 0.0);
            for (std::size_t i = 0; i < qr.rank; ++i) CHECK(qr.R_pivoted(i, j) == qr.R(i, qr.pivots[j]));
        }
    }
}

TEST_CASE("spectral_norm_estimate") {
    auto apply_dense = [](const DenseMatrix& m) {
        return MatVec([&m](std::span<const double> x, std::span<double> y) {
            Eigen::Map<Eigen::VectorXd>(y.data(), y.size()) =
                eig(m) * Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
        });
    };
    auto apply_dense_t = [](const DenseMatrix& m) {
        return MatVec([&m](std::span<const double> x, std::span<double> y) {
            Eigen::Map<Eigen::VectorXd>(y.data(), y.size()) =
                eig(m).transpose() * Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
        });
    };

    auto d = diag({5, 1}, 2, 2);
    auto e = spectral_norm_estimate(apply_dense(d), apply_dense_t(d), 2, 2, 1e-10);
    CHECK(e.converged);
    CHECK(e.value == doctest::Approx(5.0).epsilon(1e-6));

    std::mt19937_64 rng(13);
    auto m = test::random_matrix(50, 50, rng, 0.0, 1.0);
    auto est = spectral_norm_estimate(apply_dense(m), apply_dense_t(m), 50, 50, 1e-10);
    double exact = Eigen::JacobiSVD<Eigen::MatrixXd>(eig(m)).singularValues()(0);
    CHECK(est.converged);
    CHECK(std::abs(est.value - exact) / exact < 1e-6);

    // same seed, same answer
    auto again = spectral_norm_estimate(apply_dense(m), apply_dense_t(m), 50, 50, 1e-10);
    CHECK(again.value == est.value);

    // rectangular
    auto rect = test::random_matrix(30, 7, rng);
    auto er = spectral_norm_estimate(apply_dense(rect), apply_dense_t(rect), 30, 7, 1e-12);
    double exact_r = Eigen::JacobiSVD<Eigen::MatrixXd>(eig(rect)).singularValues()(0);
    CHECK(er.value == doctest::Approx(exact_r).epsilon(1e-5));

    auto zero = DenseMatrix(3, 3);
    auto ez = spectral_norm_estimate(apply_dense(zero), apply_dense_t(zero), 3, 3, 1e-10);
    CHECK(ez.value == 0.0);
}

TEST_CASE("multiply checks shapes") {
    DenseMatrix a(2, 3), b(2, 2);
    CHECK_THROWS_AS(multiply(a, b), ShapeError);
    auto i = DenseMatrix::identity(3);
    std::mt19937_64 rng(14);
    auto m = test::random_matrix(2, 3, rng);
    auto p = multiply(m, i);
    CHECK(test::max_abs_diff(p.values(), m.values()) == 0.0);
}
