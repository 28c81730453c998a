#include "qtt/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>

#include "eigen_view.hpp"
#include "parallel.hpp"
#include "qtt/archive.hpp"
#include "qtt/errors.hpp"
#include "qtt/lowrank.hpp"
#include "qtt/metrics.hpp"
#include "qtt/tensorize.hpp"
#include "qtt/tt.hpp"

namespace qtt {

namespace {

std::size_t max_rank(const TTTensor& t) {
    const auto r = t.ranks();
    return *std::max_element(r.begin(), r.end());
}

}  // namespace

std::vector<Fig3Row> bench_fig3(const Fig3Options& o) {
    if (o.level_min < 1 || o.level_max > o.d || o.level_min > o.level_max) throw RangeError("fig3: levels must lie in [1, d]");
    std::vector<Fig3Row> rows;
    for (double delta : o.deltas)
        for (double tau : o.taus)
            for (std::size_t l = o.level_min; l <= o.level_max; ++l) rows.push_back({delta, tau, l, 0.0, 0.0, 0});

    std::vector<DenseTensor> samples;
    for (double delta : o.deltas) samples.push_back(sample_univariate(delta, o.d));
    detail::parallel_for(rows.size(), o.jobs, [&](std::size_t i) {
        auto& r = rows[i];
        const auto k = static_cast<std::size_t>(std::find(o.deltas.begin(), o.deltas.end(), r.delta) - o.deltas.begin());
        const DenseTensor x = tensorize_vector(samples[k], r.level);
        const TTTensor tt = tt_svd(x, r.tau);
        r.ratio = compression_ratio(tt);
        r.rel_frob = rel_frob(x, tt_full(tt));
        r.max_rank = max_rank(tt);
    });
    return rows;
}

void write_fig3_csv(std::ostream& out, std::span<const Fig3Row> rows) {
    out << "delta,tau,level,ratio,rel_frob,max_rank\n" << std::setprecision(10);
    for (const auto& r : rows)
        out << r.delta << ',' << r.tau << ',' << r.level << ',' << r.ratio << ',' << r.rel_frob << ',' << r.max_rank << '\n';
}

std::vector<Table1Row> bench_table1(const Table1Options& o) {
    const DenseMatrix k = sample_kernel_matrix(o.delta, o.d);
    std::vector<Table1Row> rows;
    for (std::size_t l : o.levels) {
        if (l < 1 || l > o.d) throw RangeError("table1: levels must lie in [1, d]");
        for (double tau : o.taus) rows.push_back({l, tau, 0.0, 0.0, 0.0, 0});
    }
    if (!o.archive_dir.empty()) std::filesystem::create_directories(o.archive_dir);
    detail::parallel_for(rows.size(), o.jobs, [&](std::size_t i) {
        auto& r = rows[i];
        const DenseTensor x = tensorize_matrix_interlaced(k, r.level);
        const TTTensor tt = tt_svd(x, r.tau);
        if (!o.archive_dir.empty())
            write_ttc1(o.archive_dir / table1_archive_name(r.level, r.tau), tt,
                       {{"format", "qtt-bench"}, {"study", "table1"}, {"d", o.d}, {"delta", o.delta},
                        {"level", r.level}, {"tolerance", r.tau}});
        DenseMatrix diff = untensorize_matrix_interlaced(tt_full(tt), r.level);
        auto e = detail::view(diff);
        e = detail::view(k) - e;
        const auto kn = static_cast<Eigen::Index>(k.rows());
        auto apply = [&](std::span<const double> v, std::span<double> y) {
            Eigen::Map<Eigen::VectorXd>(y.data(), kn) = e * Eigen::Map<const Eigen::VectorXd>(v.data(), kn);
        };
        auto apply_t = [&](std::span<const double> v, std::span<double> y) {
            Eigen::Map<Eigen::VectorXd>(y.data(), kn) = e.transpose() * Eigen::Map<const Eigen::VectorXd>(v.data(), kn);
        };
        r.spectral_error = spectral_norm_estimate(apply, apply_t, k.rows(), k.cols(), 1e-8, 2000).value;
        r.ratio = compression_ratio(tt);
        r.rel_frob = e.norm() / detail::view(k).norm();
        r.max_rank = max_rank(tt);
    });
    return rows;
}

void write_table1_csv(std::ostream& out, std::span<const Table1Row> rows) {
    out << "level,tau,ratio,spectral_error,rel_frob,max_rank\n" << std::setprecision(10);
    for (const auto& r : rows)
        out << r.level << ',' << r.tau << ',' << r.ratio << ',' << r.spectral_error << ',' << r.rel_frob << ','
            << r.max_rank << '\n';
}

std::string table1_archive_name(std::size_t level, double tau) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "table1_l%zu_tau%.0e.ttc", level, tau);
    return buf;
}

DenseTensor reconstruct_level(std::span<const CompressedSegment> level) {
    if (level.empty()) throw ShapeError("no segments to reconstruct");
    std::vector<DenseTensor> parts;
    std::size_t total = 0;
    for (const auto& s : level) {
        parts.push_back(reconstruct(s));
        total += parts.back().dims()[0];
    }
    Extents dims = parts.front().dims();
    dims[0] = total;
    const std::size_t rest = num_entries(dims) / total;
    std::vector<double> v(total * rest);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t n = p.dims()[0];
        if (p.size() != n * rest) throw ShapeError("segments differ in shape");
        const auto src = p.values();
        for (std::size_t r = 0; r < rest; ++r)
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(n * r), n, v.begin() + static_cast<std::ptrdiff_t>(offset + total * r));
        offset += n;
    }
    return DenseTensor(std::move(dims), std::move(v));
}

std::vector<StreamingLevelRow> bench_streaming(const StreamingBenchOptions& o) {
    const SnapshotBatch batch = synth_particles(o.n_p, o.n_t, o.scenario, o.seed);
    const CompressionConfig& c = o.config;
    auto segments = compress_stream(batch, c, true);
    const auto schedule = default_rounding_schedule(segments, c.merge_arity, c.merge_mode);
    const auto levels = merge_tree(std::move(segments), c.merge_arity, schedule, c.merge_mode, c.jobs);

    std::vector<StreamingLevelRow> rows;
    for (std::size_t k = 0; k < levels.size(); ++k) {
        const auto& level = levels[k];
        StreamingLevelRow r;
        r.level = k;
        r.segments = level.size();
        std::size_t storage = 0;
        for (const auto& s : level) {
            storage += s.tt.storage();
            r.max_rank = std::max(r.max_rank, max_rank(s.tt));
        }
        r.tolerance_spent = global_spent(level);
        r.tolerance_budget = global_budget(level);
        r.ratio = static_cast<double>(batch.data.size()) / static_cast<double>(storage);
        const DenseTensor y = reconstruct_level(level);
        r.nrmse = nrmse(batch.data, y);
        r.rel_frob = rel_frob(batch.data, y);
        rows.push_back(r);
    }
    return rows;
}

void write_streaming_csv(std::ostream& out, std::span<const StreamingLevelRow> rows) {
    out << "level,segments,ratio,nrmse,rel_frob,tolerance_spent,tolerance_budget,max_rank\n" << std::setprecision(10);
    for (const auto& r : rows)
        out << r.level << ',' << r.segments << ',' << r.ratio << ',' << r.nrmse << ',' << r.rel_frob << ','
            << r.tolerance_spent << ',' << r.tolerance_budget << ',' << r.max_rank << '\n';
}

std::vector<TensorizationRow> bench_tensorization(const SnapshotBatch& batch, const CompressionConfig& config) {
    validate_batch(batch);
    const std::size_t L = config.segment_length;
    const std::size_t count = (batch.n_t() + L - 1) / L;
    std::vector<TensorizationRow> rows(count);
    detail::parallel_for(count, config.jobs, [&](std::size_t s) {
        const SnapshotBatch part = batch.slice_time(s * L, std::min(L, batch.n_t() - s * L));
        CompressionConfig c = config;
        c.segment_share = 1.0;
        c.level = 0;
        const auto deep = compress_segment(part, c);
        c.level = 1;
        const auto flat = compress_segment(part, c);
        auto& r = rows[s];
        r.segment = s;
        r.ratio_tensorized = deep.compression_ratio();
        r.ratio_untensorized = flat.compression_ratio();
        const bool constant = deep.stats.x_min == deep.stats.x_max;
        r.nrmse_tensorized = constant ? 0.0 : nrmse(part.data, reconstruct(deep));
        r.nrmse_untensorized = constant ? 0.0 : nrmse(part.data, reconstruct(flat));
    });
    return rows;
}

}  // namespace qtt
