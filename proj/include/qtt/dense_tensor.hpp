#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace qtt {

/// Tensor extents n_1..n_d.
using Extents = std::vector<std::size_t>;

/// Multi-index; entries are 1-based at every public interface.
using MultiIndex = std::vector<std::size_t>;

/// Product of all extents (1 for an empty list).
std::size_t num_entries(std::span<const std::size_t> dims);

/// Column-major long index of a 1-based multi-index, itself 1-based:
/// 1 + sum_j (n_1 ... n_{j-1}) (i_j - 1).
std::size_t long_index(std::span<const std::size_t> indices, std::span<const std::size_t> dims);

/// Inverse of long_index.
MultiIndex multi_index(std::size_t long_idx, std::span<const std::size_t> dims);

/// Dense real matrix stored column-major.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols);
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    static DenseMatrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }

    /// 1-based element access.
    double at(std::size_t row, std::size_t col) const;

    // 0-based, unchecked
    double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r + rows_ * c]; }
    double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r + rows_ * c]; }

    DenseMatrix transposed() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

/// d-dimensional real array in column-major order. Immutable once built.
class DenseTensor {
public:
    DenseTensor() = default;
    DenseTensor(Extents dims, std::vector<double> values);

    static DenseTensor zeros(Extents dims);

    const Extents& dims() const noexcept { return dims_; }
    std::size_t order() const noexcept { return dims_.size(); }
    std::size_t size() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }

    /// 1-based element access.
    double at(std::span<const std::size_t> indices) const;
    double at(std::initializer_list<std::size_t> indices) const;

    /// Moves the flat values out, leaving the tensor empty.
    std::vector<double> release() && { dims_.clear(); return std::move(values_); }

private:
    Extents dims_;
    std::vector<double> values_;
};

DenseTensor reshape(const DenseTensor& t, Extents new_dims);
DenseTensor reshape(DenseTensor&& t, Extents new_dims);

/// k-th unfolding: first k indices grouped into rows, 1 <= k <= d-1.
DenseMatrix unfold(const DenseTensor& t, std::size_t k);

double frobenius_norm(std::span<const double> values);
double frobenius_norm(const DenseTensor& t);
double frobenius_norm(const DenseMatrix& m);

/// Permutes axes: result axis j is input axis perm[j] (0-based positions).
DenseTensor permute_axes(const DenseTensor& t, std::span<const std::size_t> perm);

/// "DT64" raw tensor file: magic, u32 d, d x u64 extents, f64 values, all little-endian.
void write_dt64(const std::filesystem::path& path, const DenseTensor& t);
DenseTensor read_dt64(const std::filesystem::path& path);

}  // namespace qtt
