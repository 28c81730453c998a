#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "qtt/dense_tensor.hpp"

namespace qtt {

/// Order-3 TT core of shape r_left x n x r_right, column-major:
/// entry (a, i, b) lives at a + r_left * (i + n * b).
class TTCore {
public:
    TTCore() = default;
    TTCore(std::size_t r_left, std::size_t n, std::size_t r_right);
    TTCore(std::size_t r_left, std::size_t n, std::size_t r_right, std::vector<double> values);

    std::size_t r_left() const noexcept { return r_left_; }
    std::size_t extent() const noexcept { return n_; }
    std::size_t r_right() const noexcept { return r_right_; }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }

    // 0-based, unchecked
    double operator()(std::size_t a, std::size_t i, std::size_t b) const noexcept {
        return values_[a + r_left_ * (i + n_ * b)];
    }
    double& operator()(std::size_t a, std::size_t i, std::size_t b) noexcept {
        return values_[a + r_left_ * (i + n_ * b)];
    }

    /// r_left x (n r_right) view of the same values.
    DenseMatrix horizontal() const;
    /// (r_left n) x r_right view of the same values.
    DenseMatrix vertical() const;

private:
    std::size_t r_left_ = 0;
    std::size_t n_ = 0;
    std::size_t r_right_ = 0;
    std::vector<double> values_;
};

/// Tensor-train representation X(i_1..i_d) = X_1(i_1) ... X_d(i_d) with r_0 = r_d = 1.
class TTTensor {
public:
    TTTensor() = default;
    /// Validates the rank chain; throws StructureError when cores do not chain.
    explicit TTTensor(std::vector<TTCore> cores);

    /// All-zero tensor with every rank equal to 1.
    static TTTensor zeros(const Extents& dims);

    std::size_t order() const noexcept { return cores_.size(); }
    Extents dims() const;
    std::vector<std::size_t> ranks() const;
    const std::vector<TTCore>& cores() const noexcept { return cores_; }
    const TTCore& core(std::size_t k) const { return cores_.at(k); }

    /// Total number of stored core entries.
    std::size_t storage() const noexcept;

    std::vector<TTCore> release() && { return std::move(cores_); }

private:
    std::vector<TTCore> cores_;
};

/// TT-SVD: sequential truncated SVDs with per-step threshold tau ||X||_F / sqrt(d-1),
/// giving ||X - Y||_F <= tau ||X||_F.
TTTensor tt_svd(const DenseTensor& x, double tau_rel_frob);

/// TT-rounding: right-to-left QR orthogonalization, then left-to-right truncated SVD
/// with the same per-step threshold as tt_svd, relative to the input norm. The sweep is
/// repeated while ranks still drop and the measured error stays below tau ||t||.
TTTensor tt_round(const TTTensor& t, double tau_rel_frob);

/// Right-orthogonalizes cores 2..d; the returned tensor's norm is that of core 1.
TTTensor right_orthogonalize(const TTTensor& t);

/// Element access with 1-based indices.
double tt_get(const TTTensor& t, std::span<const std::size_t> indices);

/// Default cap on materialized entries: QTT_MEMORY_CAP_ENTRIES if set, else 2^31.
std::size_t default_memory_cap();

/// Dense reconstruction; throws CapacityError above `cap` entries.
DenseTensor tt_full(const TTTensor& t, std::optional<std::size_t> cap = std::nullopt);

/// Frobenius norm from the cores (nothing materialized).
double tt_norm(const TTTensor& t);

/// (n_1 ... n_d) / sum_k r_{k-1} n_k r_k.
double compression_ratio(const TTTensor& t);

/// Concatenation along an existing axis (1-based). Cores are block-padded with zeros;
/// interior ranks add. Exact.
TTTensor tt_concat_existing(const TTTensor& a, const TTTensor& b, std::size_t axis);

/// Stacks equally-shaped tensors along a new trailing axis of extent parts.size().
/// Exact; interior ranks add.
TTTensor tt_stack_new(std::span<const TTTensor> parts);

}  // namespace qtt
