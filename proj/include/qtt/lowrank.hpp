#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "qtt/dense_tensor.hpp"

namespace qtt {

/// Rank-r truncation M ~ U diag(s) V^T.
struct TruncatedSVD {
    DenseMatrix U;                        // m x r, orthonormal columns
    std::vector<double> singular_values;  // length r, nonincreasing
    DenseMatrix V;                        // n x r, orthonormal columns
    double discarded_energy = 0.0;        // sqrt of sum of squared discarded singular values

    std::size_t rank() const noexcept { return singular_values.size(); }
};

/// Smallest rank whose discarded tail has root-sum-square <= delta, never below 1.
/// Exact ties keep the smaller rank.
std::size_t truncation_rank(std::span<const double> singular_values, double delta);

/// Full thin SVD followed by the Frobenius tail truncation. Throws DataError on
/// non-finite entries. With `with_v` false, V is left empty and never computed.
TruncatedSVD truncated_svd(const DenseMatrix& m, double delta, bool with_v = true);

/// Column-pivoted Householder QR, truncated to the numerical rank.
///
/// M P = Q R_piv with P the column permutation; R_piv entries with
/// |R_ii| <= 1e-14 max |R_jj| mark the rank. The returned `R` is R_piv with its
/// columns scattered back (R = R_piv P^T), so that Q R reproduces M directly.
/// `R_pivoted` keeps the upper-triangular form.
struct RankRevealingQR {
    DenseMatrix Q;                      // m x r
    DenseMatrix R;                      // r x n, Q R ~ M
    DenseMatrix R_pivoted;              // r x n, upper triangular
    std::vector<std::size_t> pivots;    // column j of R_pivoted is column pivots[j] of M (0-based)
    std::size_t rank = 1;
};

inline constexpr double kQrRankThreshold = 1e-14;

RankRevealingQR rank_revealing_qr(const DenseMatrix& m);

/// Result of the power-iteration spectral norm estimate.
struct SpectralNormEstimate {
    double value = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
};

using MatVec = std::function<void(std::span<const double> x, std::span<double> y)>;

/// Largest singular value of a matrix given only y = A x and y = A^T x.
/// Power iteration on A^T A from a seeded random start; stops when two
/// successive estimates agree to `tol` (relative).
SpectralNormEstimate spectral_norm_estimate(const MatVec& apply, const MatVec& apply_transpose,
                                            std::size_t rows, std::size_t cols, double tol,
                                            std::size_t max_iterations = 500,
                                            std::uint64_t seed = 0x5eed);

/// C = A B for column-major DenseMatrix values.
DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b);

}  // namespace qtt
