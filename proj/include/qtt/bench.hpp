#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "qtt/streaming.hpp"
#include "qtt/synth_data.hpp"

namespace qtt {

/// Univariate sweep: F_delta sampled at 2^d points, tensorized at each level, compressed at each tau.
struct Fig3Options {
    std::size_t d = 20;
    std::vector<double> deltas{1e-1, 1e-5, 1e-9};
    std::vector<double> taus{1e-1, 1e-2, 1e-3, 1e-4};
    std::size_t level_min = 10;
    std::size_t level_max = 20;
    std::size_t jobs = 1;
};

struct Fig3Row {
    double delta = 0.0;
    double tau = 0.0;
    std::size_t level = 0;
    double ratio = 0.0;
    double rel_frob = 0.0;
    std::size_t max_rank = 0;
};

std::vector<Fig3Row> bench_fig3(const Fig3Options& options);
/// Header: delta,tau,level,ratio,rel_frob,max_rank
void write_fig3_csv(std::ostream& out, std::span<const Fig3Row> rows);

/// Kernel matrix sweep: interlaced tensorization at each level, compressed at each tau.
struct Table1Options {
    std::size_t d = 10;
    double delta = 1e-5;
    std::vector<std::size_t> levels{6, 7, 8};
    std::vector<double> taus{1e-2, 1e-5, 1e-8, 1e-11, 1e-14};
    std::size_t jobs = 1;
    std::filesystem::path archive_dir;  // when set, each cell's TT is written as table1_l<l>_tau<tau>.ttc
};

struct Table1Row {
    std::size_t level = 0;
    double tau = 0.0;
    double ratio = 0.0;
    double spectral_error = 0.0;  // ||K - K_hat||_2
    double rel_frob = 0.0;
    std::size_t max_rank = 0;
};

std::vector<Table1Row> bench_table1(const Table1Options& options);
/// Header: level,tau,ratio,spectral_error,rel_frob,max_rank
void write_table1_csv(std::ostream& out, std::span<const Table1Row> rows);
std::string table1_archive_name(std::size_t level, double tau);

/// Synthetic particle run compressed segment-wise and merged level by level.
struct StreamingBenchOptions {
    std::size_t n_p = 1024;
    std::size_t n_t = 1024;
    Scenario scenario = Scenario::settle;
    std::uint64_t seed = 1;
    CompressionConfig config = [] {
        CompressionConfig c;
        c.tolerance_kind = ToleranceKind::nrmse;
        c.tolerance = 1e-2;
        return c;
    }();
};

struct StreamingLevelRow {
    std::size_t level = 0;
    std::size_t segments = 0;
    double ratio = 0.0;  // all original entries over all stored core entries at this level
    double nrmse = 0.0;
    double rel_frob = 0.0;
    double tolerance_spent = 0.0;  // bound for the whole run at this level
    double tolerance_budget = 0.0;
    std::size_t max_rank = 0;
};

std::vector<StreamingLevelRow> bench_streaming(const StreamingBenchOptions& options);
/// Header: level,segments,ratio,nrmse,rel_frob,tolerance_spent,tolerance_budget,max_rank
void write_streaming_csv(std::ostream& out, std::span<const StreamingLevelRow> rows);

/// Per-segment ratios with full tensorization and with the plain n_t x n_p x n_c layout.
struct TensorizationRow {
    std::size_t segment = 0;
    double ratio_tensorized = 0.0;
    double ratio_untensorized = 0.0;
    double nrmse_tensorized = 0.0;
    double nrmse_untensorized = 0.0;
};

std::vector<TensorizationRow> bench_tensorization(const SnapshotBatch& batch, const CompressionConfig& config);

/// Reassembles the level's segments along time, in original particle order.
DenseTensor reconstruct_level(std::span<const CompressedSegment> level);

}  // namespace qtt
