#include "qtt/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <Eigen/QR>
#include <lapacke.h>

#include "eigen_view.hpp"
#include "qtt/errors.hpp"

namespace qtt {

namespace {

void require_finite(const DenseMatrix& m, const char* what) {
    for (double v : m.values())
        if (!std::isfinite(v)) throw DataError(std::string(what) + ": matrix has non-finite entries");
    if (m.rows() == 0 || m.cols() == 0) throw DataError(std::string(what) + ": empty matrix");
}

}  // namespace

std::size_t truncation_rank(std::span<const double> s, double delta) {
    if (s.empty()) return 1;
    // tail[r] = sqrt(sum_{j >= r} s_j^2), accumulated from the smallest value up
    std::vector<double> tail(s.size() + 1, 0.0);
    for (std::size_t j = s.size(); j-- > 0;) tail[j] = std::hypot(tail[j + 1], s[j]);
    for (std::size_t r = 1; r < s.size(); ++r)
        if (tail[r] <= delta) return r;
    return s.size();
}

TruncatedSVD truncated_svd(const DenseMatrix& m, double delta, bool with_v) {
    require_finite(m, "truncated_svd");
    if (!(delta >= 0.0)) throw DataError("truncated_svd: delta must be nonnegative");

    const auto rows = static_cast<lapack_int>(m.rows());
    const auto cols = static_cast<lapack_int>(m.cols());
    const auto k = std::min(rows, cols);

    std::vector<double> a(m.values().begin(), m.values().end());
    std::vector<double> s(static_cast<std::size_t>(k));
    std::vector<double> u(static_cast<std::size_t>(rows) * k);
    std::vector<double> vt(with_v ? static_cast<std::size_t>(k) * cols : 1);
    std::vector<double> superb(static_cast<std::size_t>(std::max<lapack_int>(k, 2)));

    lapack_int info = LAPACKE_dgesvd(LAPACK_COL_MAJOR, 'S', with_v ? 'S' : 'N', rows, cols, a.data(), rows,
                                     s.data(), u.data(), rows, vt.data(), with_v ? k : 1, superb.data());
    if (info != 0) throw DataError("dgesvd failed with info=" + std::to_string(info));

    TruncatedSVD out;
    if (s.front() == 0.0) {
        // zero matrix: keep one canonical pair so rank-1 chains stay well formed
        out.U = DenseMatrix(m.rows(), 1);
        out.U(0, 0) = 1.0;
        if (with_v) {
            out.V = DenseMatrix(m.cols(), 1);
            out.V(0, 0) = 1.0;
        }
        out.singular_values = {0.0};
        out.discarded_energy = 0.0;
        return out;
    }

    const auto r = truncation_rank(s, delta);
    double tail = 0.0;
    for (std::size_t j = s.size(); j-- > r;) tail = std::hypot(tail, s[j]);

    out.U = DenseMatrix(m.rows(), r, std::vector<double>(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(m.rows() * r)));
    if (with_v) {
        out.V = DenseMatrix(m.cols(), r);
        for (std::size_t c = 0; c < m.cols(); ++c)
            for (std::size_t j = 0; j < r; ++j) out.V(c, j) = vt[j + static_cast<std::size_t>(k) * c];
    }
    out.singular_values.assign(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(r));
    out.discarded_energy = tail;
    return out;
}

RankRevealingQR rank_revealing_qr(const DenseMatrix& m) {
    require_finite(m, "rank_revealing_qr");
    const auto rows = static_cast<Eigen::Index>(m.rows());
    const auto cols = static_cast<Eigen::Index>(m.cols());

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(detail::view(m));
    const Eigen::MatrixXd& packed = qr.matrixQR();
    const auto diag_len = std::min(rows, cols);

    double max_diag = 0.0;
    for (Eigen::Index i = 0; i < diag_len; ++i) max_diag = std::max(max_diag, std::abs(packed(i, i)));
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < diag_len; ++i)
        if (std::abs(packed(i, i)) > kQrRankThreshold * max_diag) ++rank;
    rank = std::max<Eigen::Index>(rank, 1);

    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, rank);
    Eigen::MatrixXd r_piv = packed.topRows(rank).triangularView<Eigen::Upper>();
    if (max_diag == 0.0) r_piv.setZero();

    RankRevealingQR out;
    out.rank = static_cast<std::size_t>(rank);
    out.pivots.resize(static_cast<std::size_t>(cols));
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index j = 0; j < cols; ++j) out.pivots[static_cast<std::size_t>(j)] = static_cast<std::size_t>(perm(j));

    Eigen::MatrixXd r_full(rank, cols);
    for (Eigen::Index j = 0; j < cols; ++j) r_full.col(perm(j)) = r_piv.col(j);

    out.Q = detail::to_dense(q);
    out.R = detail::to_dense(r_full);
    out.R_pivoted = detail::to_dense(r_piv);
    return out;
}

SpectralNormEstimate spectral_norm_estimate(const MatVec& apply, const MatVec& apply_transpose,
                                            std::size_t rows, std::size_t cols, double tol,
                                            std::size_t max_iterations, std::uint64_t seed) {
    if (!(tol > 0.0 && tol < 1.0)) throw RangeError("spectral_norm_estimate: tol must lie in (0,1)");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;

    std::vector<double> x(cols), y(rows), z(cols);
    for (auto& v : x) v = normal(rng);

    auto normalize = [](std::vector<double>& v) {
        double n = frobenius_norm(v);
        if (n > 0.0)
            for (auto& e : v) e /= n;
        return n;
    };
    normalize(x);

    SpectralNormEstimate est;
    double previous = 0.0;
    for (std::size_t it = 1; it <= max_iterations; ++it) {
        apply(x, y);
        const double sigma = frobenius_norm(y);
        est.iterations = it;
        est.value = std::max(est.value, sigma);
        if (sigma == 0.0) {
            est.converged = true;
            return est;
        }
        if (it > 1 && std::abs(sigma - previous) < tol * sigma) {
            est.converged = true;
            return est;
        }
        previous = sigma;
        apply_transpose(y, z);
        x.swap(z);
        if (normalize(x) == 0.0) {
            est.converged = true;
            return est;
        }
    }
    return est;
}

DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matrix product " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    DenseMatrix c(a.rows(), b.cols());
    detail::view(c).noalias() = detail::view(a) * detail::view(b);
    return c;
}

}  // namespace qtt
