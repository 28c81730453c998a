#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qtt/synth_data.hpp"
#include "qtt/tensorize.hpp"
#include "qtt/tt.hpp"

namespace qtt {

enum class ToleranceKind { nrmse, relfrob };
enum class ReorderPolicy { none, per_segment, per_timestep };
enum class MergeMode { stack, concat };

std::string to_string(ToleranceKind k);
std::string to_string(ReorderPolicy p);
std::string to_string(MergeMode m);
ToleranceKind parse_tolerance_kind(const std::string& s);
ReorderPolicy parse_reorder_policy(const std::string& s);
MergeMode parse_merge_mode(const std::string& s);

struct CompressionConfig {
    ToleranceKind tolerance_kind = ToleranceKind::relfrob;
    double tolerance = 1e-3;          // 0 requests lossless compression
    std::size_t segment_length = 32;  // timesteps per segment
    std::size_t merge_arity = 2;
    MergeMode merge_mode = MergeMode::stack;
    std::size_t level = 0;            // tensorization level for every axis; 0 = full depth, 1 = untensorized
    std::size_t max_factor = 5;
    ReorderPolicy reorder = ReorderPolicy::per_segment;
    unsigned morton_bits = 0;         // 0 picks from the particle radius, else the default
    double segment_share = 0.5;       // part of the budget given to segment compression when merging
    std::size_t jobs = 1;
};

/// Throws ConfigError on invalid values.
void validate_config(const CompressionConfig& c);
void to_json(nlohmann::json& j, const CompressionConfig& c);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
void from_json(const nlohmann::json& j, CompressionConfig& c);
/// SHA-256 of the canonical JSON form of the settings that shape archives (excludes `jobs`).
std::string config_hash(const CompressionConfig& c);

/// Summary statistics of unpadded data.
struct SegmentStats {
    double x_min = 0.0;
    double x_max = 0.0;
    double frobenius_norm = 0.0;
    std::size_t entry_count = 0;

    static SegmentStats of(std::span<const double> values);
    /// Exact statistics of the union of two disjoint data sets.
    static SegmentStats combine(const SegmentStats& a, const SegmentStats& b);
};

/// (x_max - x_min) sqrt(n) / ||X|| * tau_nrmse; nullopt for constant or zero data,
/// meaning the data must be stored exactly.
std::optional<double> nrmse_to_relfrob(double tau_nrmse, const SegmentStats& stats);

/// Budget after merging parts with spent tolerance tau and rounding at tau_round.
inline double compose_tolerance(double tau, double tau_round) { return tau + tau_round + tau * tau_round; }

/// Particle ordering used on timesteps [time_first, time_last] (global, inclusive).
/// perm[k] is the original index of the particle stored in slot k; empty means identity.
struct PermutationBlock {
    std::size_t time_first = 0;
    std::size_t time_last = 0;
    std::vector<std::uint32_t> perm;
};

struct CompressedSegment {
    TTTensor tt;
    TensorizePlan plan;                     // shape of one base segment (time axis first)
    std::vector<std::size_t> stack_extents; // trailing axes added by stack merges
    std::array<std::size_t, 2> time_range{0, 0};  // global timesteps, inclusive
    SegmentStats stats;
    std::vector<PermutationBlock> permutations;
    ToleranceKind tolerance_kind = ToleranceKind::relfrob;
    double tolerance_value = 0.0;           // configured total tolerance, in its own kind
    double tolerance_spent = 0.0;           // relative Frobenius bound vs the unpadded data
    double tolerance_budget = 0.0;          // relative Frobenius equivalent of tolerance_value
    std::string config_hash;
    std::size_t level = 0;

    std::size_t segment_length() const { return plan.original_dims.at(0); }
    std::size_t timesteps() const { return time_range[1] - time_range[0] + 1; }
    std::size_t base_segments() const;
    /// Dims of the reconstructed data: timesteps x remaining original axes.
    Extents data_dims() const;
    /// Original entries over stored core entries.
    double compression_ratio() const;
};

/// Compresses one segment whose first axis is time. `first_timestep` is its global offset;
/// `running` holds statistics of all data seen before this segment (nRMSE targeting).
/// `permutations` describe an ordering already applied to `data`.
CompressedSegment compress_tensor_segment(const DenseTensor& data, const CompressionConfig& config,
                                          std::size_t first_timestep, std::vector<PermutationBlock> permutations = {},
                                          const std::optional<SegmentStats>& running = std::nullopt);

/// Morton reordering, padding and tensorization, then TT-SVD at the converted tolerance.
CompressedSegment compress_segment(const SnapshotBatch& batch, const CompressionConfig& config,
                                   const std::optional<SegmentStats>& running = std::nullopt);

/// Reorders particles of a batch per the policy; returns the reordered data and blocks.
std::pair<DenseTensor, std::vector<PermutationBlock>> reorder_particles(const SnapshotBatch& batch,
                                                                        const CompressionConfig& config);

/// Stacks contiguous, equally-shaped segments along a new trailing axis, then rounds.
CompressedSegment merge_stack(std::span<const CompressedSegment> parts, double tau_round);

/// Concatenates segments along original axis `dim` (1-based), then rounds. The axis must be
/// untensorized and unpadded in every part.
CompressedSegment merge_concat(std::span<const CompressedSegment> parts, std::size_t dim, double tau_round);

/// Number of merge levels needed to reach one segment; ConfigError when stacking cannot divide evenly.
std::size_t merge_level_count(std::size_t segments, std::size_t arity, MergeMode mode);

/// Uniform rounding tolerance per level so that (1 + spent)(1 + tau_r)^levels = 1 + budget.
/// Entries are zero when nothing remains.
std::vector<double> rounding_schedule(double budget, double spent, std::size_t levels);

/// Relative Frobenius budget for the union of `segments`.
double global_budget(std::span<const CompressedSegment> segments);

/// Relative Frobenius error bound of the union of `segments` against its unpadded data.
double global_spent(std::span<const CompressedSegment> segments);

/// Uniform per-level schedule that spends what the segments left of the global budget.
std::vector<double> default_rounding_schedule(std::span<const CompressedSegment> segments, std::size_t arity,
                                              MergeMode mode = MergeMode::stack);

/// Level 0 = inputs; level k+1 merges consecutive groups of `arity`. Checks that the schedule
/// stays within the budget before doing any work.
std::vector<std::vector<CompressedSegment>> merge_tree(std::vector<CompressedSegment> segments, std::size_t arity,
                                                       std::span<const double> tau_schedule,
                                                       MergeMode mode = MergeMode::stack, std::size_t jobs = 1);

/// Full reconstruction in the original particle order with padding removed.
DenseTensor reconstruct(const CompressedSegment& seg, std::optional<std::size_t> cap = std::nullopt);

/// Element access without materializing the tensor. Indices are 1-based within data_dims().
class SegmentAccessor {
public:
    explicit SegmentAccessor(const CompressedSegment& seg);
    double get(std::span<const std::size_t> index) const;
    /// Entries of an axis-aligned box, lo/hi 1-based inclusive per axis.
    DenseTensor region(std::span<const std::size_t> lo, std::span<const std::size_t> hi) const;

private:
    const CompressedSegment& seg_;
    std::vector<std::vector<std::uint32_t>> inverse_;  // per permutation block
};

/// Segment metadata as stored in the archive.
nlohmann::json segment_metadata(const CompressedSegment& seg);
CompressedSegment segment_from_archive(TTTensor tt, const nlohmann::json& metadata);

/// `seg_<first>_<last>.ttc`.
std::string segment_file_name(const CompressedSegment& seg);
std::filesystem::path write_segment(const std::filesystem::path& dir, const CompressedSegment& seg);
CompressedSegment read_segment(const std::filesystem::path& path);
/// All segment archives in a directory, ordered by first timestep.
std::vector<std::filesystem::path> list_segments(const std::filesystem::path& dir);

/// Splits data along time into segments and compresses them (in parallel when config.jobs > 1).
/// Running statistics and tolerance shares are fixed before any worker starts.
std::vector<CompressedSegment> compress_stream(const SnapshotBatch& batch, const CompressionConfig& config,
                                               bool will_merge);
std::vector<CompressedSegment> compress_stream(const DenseTensor& data, const CompressionConfig& config,
                                               bool will_merge);

}  // namespace qtt
