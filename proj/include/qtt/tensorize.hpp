#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "json.hpp"
#include "qtt/dense_tensor.hpp"

namespace qtt {

/// Prime factors of n (each <= max_factor), nondecreasing. n == 1 gives an empty list.
/// Returns nullopt when n has a prime factor above max_factor.
std::optional<std::vector<std::size_t>> factor_dims(std::size_t n, std::size_t max_factor);

/// Smallest m >= n whose prime factors are all <= max_factor.
std::size_t next_smooth(std::size_t n, std::size_t max_factor);

/// Binary-tree tensorization of a length-2^d vector truncated at level l:
/// shape 2^(d-l+1) x 2 x ... x 2 (l-1 twos). A column-major reshape.
DenseTensor tensorize_vector(const DenseTensor& v, std::size_t level);

/// Interlaced tensorization of a 2^d x 2^d matrix at level l:
/// axes (row leaf, column leaf, i, j, i, j, ...), each leaf of extent 2^(d-l+1).
DenseTensor tensorize_matrix_interlaced(const DenseMatrix& m, std::size_t level);
DenseMatrix untensorize_matrix_interlaced(const DenseTensor& t, std::size_t level);

enum class PadStrategy { none, replicate };

struct PadRecord {
    std::size_t original_extent = 0;
    std::size_t padded_extent = 0;
    PadStrategy strategy = PadStrategy::none;
};

/// Extends `axis` (1-based) to `target_extent` by repeating its last slice.
std::pair<DenseTensor, PadRecord> pad_replicate(const DenseTensor& t, std::size_t axis, std::size_t target_extent);

/// Keeps the first `extent` slices along `axis` (1-based).
DenseTensor crop(const DenseTensor& t, std::size_t axis, std::size_t extent);

/// Per-axis factorization of one original axis.
struct AxisPlan {
    std::vector<std::size_t> factors;  // product == padded extent
    std::size_t level = 1;             // leaf groups the first depth-level+1 factors
    PadRecord pad;

    std::size_t depth() const noexcept { return factors.empty() ? 1 : factors.size(); }
    /// Extents this axis contributes to the tensorized shape.
    std::vector<std::size_t> grouped_dims() const;
};

struct TensorizePlan {
    Extents original_dims;
    std::vector<AxisPlan> axes;
    /// Original axes (0-based) whose tensorized factors are interleaved; empty for none.
    std::vector<std::size_t> interlace;

    Extents padded_dims() const;
    /// Shape after the per-axis split, before any interlacing.
    Extents split_dims() const;
    /// Shape of the tensorized tensor.
    Extents tensorized_dims() const;
    /// permute_axes argument turning split_dims order into tensorized order.
    std::vector<std::size_t> axis_permutation() const;
    bool has_padding() const;
    bool is_identity() const;
};

struct PlanOptions {
    std::size_t max_factor = 5;
    /// Level per original axis; 0 (or a missing entry) means full depth.
    std::vector<std::size_t> levels;
    std::vector<std::size_t> interlace;
    /// Explicit padded extent per axis; 0 (or missing) picks the next smooth extent when needed.
    std::vector<std::size_t> pad_to;
};

/// Factors every axis, padding axes whose extent is not max_factor-smooth. Axes requested
/// at level 1 are kept whole and never padded.
TensorizePlan make_plan(const Extents& dims, const PlanOptions& options = {});

/// Plan that leaves the tensor untouched.
TensorizePlan identity_plan(const Extents& dims);

/// Throws PlanError when the plan is internally inconsistent.
void validate_plan(const TensorizePlan& plan);

DenseTensor apply_plan(const DenseTensor& data, const TensorizePlan& plan);
/// Inverse of apply_plan, cropped to the original region.
DenseTensor invert_plan(const DenseTensor& data, const TensorizePlan& plan);

/// Position in the tensorized tensor (1-based) of an original entry (1-based).
MultiIndex tensorized_index(const TensorizePlan& plan, std::span<const std::size_t> original);

void to_json(nlohmann::json& j, const TensorizePlan& plan);
void from_json(const nlohmann::json& j, TensorizePlan& plan);

}  // namespace qtt
