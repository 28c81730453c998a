// One PASS/FAIL line per acceptance criterion; exit status 1 when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qtt/bench.hpp"
#include "qtt/metrics.hpp"
#include "qtt/spatial_order.hpp"
#include "qtt/streaming.hpp"
#include "qtt/synth_data.hpp"
#include "qtt/tt.hpp"
#include "test_support.hpp"

using namespace qtt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// Reference values by (level, tau): compression ratio and spectral-norm error.
const std::map<std::pair<std::size_t, double>, std::pair<double, double>> kTable1 = {
    {{6, 1e-2}, {1.6e2, 7.5e-1}},  {{7, 1e-2}, {4.9e2, 7.7e-1}},  {{8, 1e-2}, {1.0e3, 9.6e-1}},
    {{6, 1e-5}, {1.0e2, 1.1e-3}},  {{7, 1e-5}, {2.9e2, 1.3e-3}},  {{8, 1e-5}, {4.6e2, 1.1e-3}},
    {{6, 1e-8}, {7.5e1, 9.8e-7}},  {{7, 1e-8}, {2.0e2, 1.0e-6}},  {{8, 1e-8}, {3.1e2, 1.0e-6}},
    {{6, 1e-11}, {6.3e1, 1.5e-9}}, {{7, 1e-11}, {1.6e2, 1.5e-9}}, {{8, 1e-11}, {2.2e2, 1.1e-9}},
    {{6, 1e-14}, {5.4e1, 5.9e-12}}, {{7, 1e-14}, {1.3e2, 6.0e-12}}, {{8, 1e-14}, {1.7e2, 7.4e-12}},
};

Outcome table1() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto rows = bench_table1({});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Outcome o;
    std::ostringstream bad;
    std::size_t ok = 0;
    for (const auto& r : rows) {
        const auto [ratio_ref, err_ref] = kTable1.at({r.level, r.tau});
        const bool ratio_ok = std::fabs(r.ratio - ratio_ref) <= 0.25 * ratio_ref;
        const bool err_ok = r.spectral_error <= 10 * err_ref && r.spectral_error >= err_ref / 10;
        if (ratio_ok && err_ok) {
            ++ok;
            continue;
        }
        o.pass = false;
        bad << " [l=" << r.level << " tau=" << fmt("%.0e", r.tau) << " ratio " << fmt("%.3g", r.ratio) << " vs "
            << fmt("%.2g", ratio_ref) << ", err " << fmt("%.2g", r.spectral_error) << " vs " << fmt("%.2g", err_ref)
            << "]";
    }
    if (secs >= 60) o.pass = false;
    o.detail = std::to_string(ok) + "/" + std::to_string(rows.size()) + " cells within tolerance, " + fmt("%.1f", secs) +
               " s" + bad.str();
    return o;
}

Outcome fig3() {
    const auto t0 = std::chrono::steady_clock::now();
    const Fig3Options opt;
    const auto rows = bench_fig3(opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::map<std::tuple<double, double, std::size_t>, double> ratio;
    for (const auto& r : rows) ratio[{r.delta, r.tau, r.level}] = r.ratio;
    Outcome o;
    std::size_t a_fail = 0, b_fail = 0;
    for (double delta : opt.deltas)
        for (double tau : opt.taus)
            if (ratio[{delta, tau, 20}] < ratio[{delta, tau, 10}]) ++a_fail;
    for (double tau : opt.taus)
        for (std::size_t i = 1; i < opt.deltas.size(); ++i)
            if (ratio[{opt.deltas[i], tau, 20}] > ratio[{opt.deltas[i - 1], tau, 20}]) ++b_fail;
    o.pass = a_fail == 0 && b_fail == 0 && secs < 300;
    o.detail = "(a) " + std::to_string(a_fail) + " violations, (b) " + std::to_string(b_fail) + " violations, " +
               fmt("%.1f", secs) + " s";
    return o;
}

Outcome tt_svd_bound() {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> order(3, 5), extent(2, 5);
    double worst = 0.0;
    std::size_t cases = 0, failures = 0;
    for (int trial = 0; trial < 200; ++trial) {
        Extents dims(order(rng));
        for (auto& n : dims) n = extent(rng);
        const DenseTensor x = test::random_tensor(dims, rng, -1.0, 1.0);
        for (double tau : {1e-1, 1e-3, 1e-6}) {
            const double e = rel_frob(x, tt_full(tt_svd(x, tau)));
            worst = std::max(worst, e / tau);
            failures += e > tau;
            ++cases;
        }
    }
    return {failures == 0, std::to_string(cases) + " cases, worst error/tau " + fmt("%.3f", worst)};
}

Outcome rounding_bound() {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::size_t> order(3, 5), extent(2, 5), rank(1, 3), axis_pick(0, 100);
    double worst = 0.0;
    std::size_t cases = 0, failures = 0, rank_changes = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Extents dims(order(rng));
        for (auto& n : dims) n = extent(rng);
        std::vector<std::size_t> ranks(dims.size() - 1);
        for (auto& r : ranks) r = rank(rng);
        const TTTensor a = test::random_tt(dims, ranks, rng);
        TTTensor inflated;
        if (trial % 2 == 0) {
            // repeated copies of one TT plus an independent one, stacked
            std::vector<TTTensor> parts{a, a, test::random_tt(dims, ranks, rng), a};
            inflated = tt_stack_new(parts);
        } else {
            const std::size_t axis = 1 + axis_pick(rng) % dims.size();
            inflated = tt_concat_existing(tt_concat_existing(a, a, axis), test::random_tt(dims, ranks, rng), axis);
        }
        const DenseTensor x = tt_full(inflated);
        for (double tau : {1e-1, 1e-3, 1e-6}) {
            const TTTensor once = tt_round(inflated, tau);
            const double e = rel_frob(x, tt_full(once));
            worst = std::max(worst, e / tau);
            failures += e > tau;
            rank_changes += tt_round(once, tau).ranks() != once.ranks();
            ++cases;
        }
    }
    return {failures == 0 && rank_changes == 0, std::to_string(cases) + " cases, worst error/tau " +
                                                   fmt("%.3f", worst) + ", " + std::to_string(rank_changes) +
                                                   " rank changes on second rounding"};
}

CompressionConfig relfrob_config(double tau, MergeMode mode) {
    CompressionConfig c;
    c.tolerance_kind = ToleranceKind::relfrob;
    c.tolerance = tau;
    c.segment_share = 1.0;
    c.reorder = ReorderPolicy::none;
    c.merge_mode = mode;
    return c;
}

std::vector<CompressedSegment> split(const DenseTensor& x, std::size_t count, CompressionConfig c) {
    std::vector<CompressedSegment> parts;
    const std::size_t L = x.dims()[0] / count;
    c.segment_length = L;
    for (std::size_t s = 0; s < count; ++s) {
        const DenseTensor part = test::build_tensor({L, x.dims()[1], x.dims()[2]}, [&](const MultiIndex& i) {
            return x.at({i[0] + s * L, i[1], i[2]});
        });
        parts.push_back(compress_tensor_segment(part, c, s * L));
    }
    return parts;
}

Outcome streaming_budget() {
    std::mt19937_64 rng(5);
    double worst = 0.0;
    std::size_t cases = 0, failures = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const DenseTensor x = test::random_tensor({8, 8, 8}, rng, -1.0, 1.0);
        for (std::size_t count : {2, 4, 8})
            for (double tau : {1e-2, 1e-4})
                for (double tau_r : {1e-2, 1e-4})
                    for (MergeMode mode : {MergeMode::stack, MergeMode::concat}) {
                        const auto parts = split(x, count, relfrob_config(tau, mode));
                        const auto merged =
                            mode == MergeMode::stack ? merge_stack(parts, tau_r) : merge_concat(parts, 1, tau_r);
                        const double bound = compose_tolerance(tau, tau_r);
                        const double e = rel_frob(x, reconstruct(merged));
                        worst = std::max(worst, e / bound);
                        failures += e > bound;
                        ++cases;
                    }
    }
    return {failures == 0, std::to_string(cases) + " merges, worst error/bound " + fmt("%.3f", worst)};
}

Outcome merge_exactness() {
    std::mt19937_64 rng(6);
    double worst = 0.0;
    std::size_t cases = 0;
    // TT-level primitives against dense concatenation and stacking
    for (int trial = 0; trial < 40; ++trial) {
        const Extents dims{2 + rng() % 3, 2 + rng() % 3, 2 + rng() % 3};
        const TTTensor a = test::random_tt(dims, {2, 3}, rng), b = test::random_tt(dims, {3, 2}, rng);
        const DenseTensor fa = tt_full(a), fb = tt_full(b);
        for (std::size_t axis = 1; axis <= 3; ++axis) {
            const DenseTensor want = test::dense_concat(fa, fb, axis);
            const DenseTensor got = tt_full(tt_concat_existing(a, b, axis));
            worst = std::max(worst, test::max_abs_diff(want.values(), got.values()) / frobenius_norm(want));
            ++cases;
        }
        const std::vector<TTTensor> parts{a, b, a};
        const DenseTensor want = test::dense_stack({fa, fb, fa});
        worst = std::max(worst, test::max_abs_diff(want.values(), tt_full(tt_stack_new(parts)).values()) /
                                    frobenius_norm(want));
        ++cases;
    }
    // segment merges without rounding against the parts' reconstructions
    for (int trial = 0; trial < 10; ++trial) {
        const DenseTensor x = test::random_tensor({8, 8, 8}, rng, -1.0, 1.0);
        for (MergeMode mode : {MergeMode::stack, MergeMode::concat}) {
            const auto parts = split(x, 4, relfrob_config(1e-2, mode));
            std::vector<DenseTensor> pieces;
            for (const auto& p : parts) pieces.push_back(reconstruct(p));
            DenseTensor want = pieces[0];
            for (std::size_t i = 1; i < pieces.size(); ++i) want = test::dense_concat(want, pieces[i], 1);
            const auto merged = mode == MergeMode::stack ? merge_stack(parts, 0.0) : merge_concat(parts, 1, 0.0);
            worst = std::max(worst,
                             test::max_abs_diff(want.values(), reconstruct(merged).values()) / frobenius_norm(want));
            ++cases;
        }
    }
    return {worst <= 1e-12, std::to_string(cases) + " merges, worst max|diff|/||X|| " + fmt("%.2e", worst)};
}

Outcome nrmse_targeting() {
    const SnapshotBatch batch = synth_particles(4096, 32, Scenario::settle, 1);
    Outcome o;
    for (double tau : {1e-1, 1e-2}) {
        CompressionConfig c;
        c.tolerance_kind = ToleranceKind::nrmse;
        c.tolerance = tau;
        const auto segs = compress_stream(batch, c, false);
        const double e = nrmse(batch.data, reconstruct_level(segs));
        o.pass = o.pass && e <= tau;
        o.detail += (o.detail.empty() ? "" : ", ") + std::string("target ") + fmt("%.0e", tau) + " measured " +
                    fmt("%.3g", e) + " (ratio " + fmt("%.3g", segs.front().compression_ratio()) + ")";
    }
    return o;
}

Outcome tensorization_advantage() {
    const SnapshotBatch batch = synth_particles(4096, 1024, Scenario::settle, 1);
    CompressionConfig c;
    c.tolerance_kind = ToleranceKind::nrmse;
    c.tolerance = 1e-1;
    const auto rows = bench_tensorization(batch, c);
    std::size_t wins = 0;
    double worst_nrmse = 0.0;
    for (const auto& r : rows) {
        wins += r.ratio_tensorized > r.ratio_untensorized;
        worst_nrmse = std::max({worst_nrmse, r.nrmse_tensorized, r.nrmse_untensorized});
    }
    const bool ok = wins >= 0.9 * static_cast<double>(rows.size()) && worst_nrmse <= 1e-1;
    return {ok, "tensorized wins " + std::to_string(wins) + "/" + std::to_string(rows.size()) +
                    " segments, worst segment nRMSE " + fmt("%.3g", worst_nrmse)};
}

Outcome morton() {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Point3> pts(2000);
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    // duplicates exercise stability
    for (std::size_t i = 0; i < 200; ++i) pts[1000 + i] = pts[i];
    const unsigned b = 10;

    bool deterministic = morton_sort(pts, b) == morton_sort(pts, b);
    for (const auto& p : pts) deterministic = deterministic && morton_id(p, b) == morton_id(p, b);

    const auto perm = morton_sort(pts, b);
    bool sorted = true;
    for (std::size_t k = 1; k < perm.size(); ++k) {
        const auto ka = morton_id(pts[perm[k - 1]], b).bits, kb = morton_id(pts[perm[k]], b).bits;
        sorted = sorted && (ka < kb || (ka == kb && perm[k - 1] < perm[k]));
    }

    std::size_t prefix_failures = 0;
    for (unsigned depth = 1; depth <= 4; ++depth)
        for (const auto& p : pts) {
            std::uint64_t octants = 0;
            for (unsigned j = 1; j <= depth; ++j) {
                const double s = std::ldexp(1.0, static_cast<int>(j));
                const auto bit = [&](double c) { return static_cast<std::uint64_t>(std::floor(c * s)) & 1u; };
                octants = (octants << 3) | (bit(p[0]) << 2) | (bit(p[1]) << 1) | bit(p[2]);
            }
            prefix_failures += (morton_id(p, b).bits >> (3 * (b - depth))) != octants;
        }

    const auto worked = morton_id({0.25, 0.5, 0.75}, 2).bits;
    const bool ok = deterministic && sorted && prefix_failures == 0 && worked == 29;
    return {ok, std::string("deterministic ") + (deterministic ? "yes" : "no") + ", stable sort " +
                    (sorted ? "yes" : "no") + ", prefix failures " + std::to_string(prefix_failures) +
                    ", key(0.25,0.5,0.75;2) = " + std::to_string(worked)};
}

Outcome roundtrip() {
    const fs::path root = fs::temp_directory_path() / "qtt_acceptance_roundtrip";
    fs::remove_all(root);
    SnapshotBatch run = synth_particles(301, 70, Scenario::settle, 11);
    write_snapshots(root / "run", run);

    const SnapshotBatch batch = load_snapshots(root / "run");
    CompressionConfig c;
    c.tolerance_kind = ToleranceKind::relfrob;
    c.tolerance = 0.0;
    c.reorder = ReorderPolicy::per_segment;
    const auto segs = compress_stream(batch, c, false);
    bool permuted = false, padded = false;
    for (const auto& s : segs) {
        padded = padded || num_entries(s.plan.tensorized_dims()) > num_entries(s.plan.original_dims) ||
                 s.timesteps() < s.segment_length();
        for (const auto& blk : s.permutations)
            for (std::size_t k = 0; k < blk.perm.size(); ++k) permuted = permuted || blk.perm[k] != k;
        write_segment(root / "archives", s);
    }

    std::vector<CompressedSegment> loaded;
    for (const auto& p : list_segments(root / "archives")) loaded.push_back(read_segment(p));
    SnapshotBatch out = batch;
    out.data = reconstruct_level(loaded);
    write_snapshots(root / "restored", out);
    const DenseTensor y = load_snapshots(root / "restored").data;

    const DenseTensor& x = run.data;
    const bool same_shape = y.dims() == x.dims();
    const double dev = same_shape ? test::max_abs_diff(x.values(), y.values()) / frobenius_norm(x) : INFINITY;
    fs::remove_all(root);
    const bool ok = same_shape && dev <= 1e-10 && permuted && padded && loaded.size() == segs.size();
    return {ok, std::to_string(loaded.size()) + " segments, reordered " + (permuted ? "yes" : "no") + ", padded " +
                    (padded ? "yes" : "no") + ", max|diff|/||X|| " + fmt("%.2e", dev)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"kernel matrix ratios and spectral errors", table1},
        {"univariate sweep trends", fig3},
        {"TT-SVD error bound", tt_svd_bound},
        {"TT-rounding bound and idempotence", rounding_bound},
        {"streaming error budget", streaming_budget},
        {"exactness of combination primitives", merge_exactness},
        {"nRMSE targeting", nrmse_targeting},
        {"tensorization advantage", tensorization_advantage},
        {"Morton invariants", morton},
        {"roundtrip integrity", roundtrip},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << o.detail
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
