#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "qtt/archive.hpp"
#include "qtt/errors.hpp"
#include "qtt/metrics.hpp"
#include "qtt/streaming.hpp"
#include "test_support.hpp"

using namespace qtt;

namespace {

CompressionConfig relfrob_config(double tau, std::size_t segment_length, MergeMode mode = MergeMode::stack) {
    CompressionConfig c;
    c.tolerance_kind = ToleranceKind::relfrob;
    c.tolerance = tau;
    c.segment_length = segment_length;
    c.merge_mode = mode;
    c.segment_share = 1.0;
    c.reorder = ReorderPolicy::none;
    return c;
}

std::vector<CompressedSegment> split_compress(const DenseTensor& x, const CompressionConfig& c) {
    std::vector<CompressedSegment> parts;
    const std::size_t n = x.dims()[0];
    for (std::size_t first = 0; first < n; first += c.segment_length) {
        const std::size_t count = std::min(c.segment_length, n - first);
        Extents d = x.dims();
        d[0] = count;
        auto seg = test::build_tensor(d, [&](const MultiIndex& idx) {
            MultiIndex g = idx;
            g[0] += first;
            return x.at(g);
        });
        parts.push_back(compress_tensor_segment(seg, c, first));
    }
    return parts;
}

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("qtt_stream_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("nrmse_to_relfrob examples") {
    auto s = SegmentStats::of(std::vector<double>{1, -1});
    CHECK(nrmse_to_relfrob(0.05, s).value() == doctest::Approx(0.1).epsilon(1e-14));
    CHECK_FALSE(nrmse_to_relfrob(0.1, SegmentStats::of(std::vector<double>{2, 2, 2})).has_value());
    CHECK_FALSE(nrmse_to_relfrob(0.1, SegmentStats::of(std::vector<double>{0, 0})).has_value());
    CHECK(compose_tolerance(1e-2, 1e-2) == doctest::Approx(0.0201).epsilon(1e-14));
}

TEST_CASE("stats combine equals stats of the union") {
    std::mt19937_64 rng(40);
    for (int t = 0; t < 20; ++t) {
        auto a = test::uniform_values(1 + rng() % 30, rng, -2, 3);
        auto b = test::uniform_values(1 + rng() % 30, rng, -5, 1);
        auto u = a;
        u.insert(u.end(), b.begin(), b.end());
        auto c = SegmentStats::combine(SegmentStats::of(a), SegmentStats::of(b));
        auto d = SegmentStats::of(u);
        CHECK(c.x_min == d.x_min);
        CHECK(c.x_max == d.x_max);
        CHECK(c.entry_count == d.entry_count);
        CHECK(c.frobenius_norm == doctest::Approx(d.frobenius_norm).epsilon(1e-14));
    }
}

TEST_CASE("config JSON roundtrip, validation and hash") {
    CompressionConfig c;
    c.tolerance_kind = ToleranceKind::nrmse;
    c.tolerance = 0.02;
    c.reorder = ReorderPolicy::per_timestep;
    c.morton_bits = 12;
    nlohmann::json j = c;
    auto back = j.get<CompressionConfig>();
    CHECK(nlohmann::json(back) == j);
    CHECK(config_hash(back) == config_hash(c));
    back.jobs = 8;
    CHECK(config_hash(back) == config_hash(c));
    back.tolerance = 0.03;
    CHECK(config_hash(back) != config_hash(c));
    CHECK(config_hash(c).size() == 64);

    CHECK_THROWS_AS(nlohmann::json({{"tolerence", 1}}).get<CompressionConfig>(), ConfigError);
    CHECK_THROWS_AS(nlohmann::json({{"segment_length", 0}}).get<CompressionConfig>(), ConfigError);
    CHECK_THROWS_AS(nlohmann::json({{"merge_arity", 1}}).get<CompressionConfig>(), ConfigError);
    CHECK_THROWS_AS(nlohmann::json({{"tolerance", -1}}).get<CompressionConfig>(), ConfigError);
    CHECK_THROWS_AS(nlohmann::json({{"reorder", "spiral"}}).get<CompressionConfig>(), ConfigError);
    CHECK_THROWS_AS(nlohmann::json({{"tolerance", "x"}}).get<CompressionConfig>(), ConfigError);
}

TEST_CASE("constant batch compresses to rank 1") {
    SnapshotBatch b;
    b.data = DenseTensor({32, 1024, 3}, std::vector<double>(32 * 1024 * 3, 0.75));
    attach_positions_from_components(b);
    CompressionConfig c;
    c.tolerance_kind = ToleranceKind::nrmse;
    c.tolerance = 1e-3;
    auto seg = compress_segment(b, c);
    const auto ranks = seg.tt.ranks();
    CHECK(*std::max_element(ranks.begin(), ranks.end()) == 1);
    CHECK(seg.compression_ratio() > 1e3);
    CHECK(seg.tolerance_spent == 0.0);
    auto y = reconstruct(seg);
    CHECK(test::max_abs_diff(y.values(), b.data.values()) == 0.0);
}

TEST_CASE("noise batch is incompressible") {
    auto b = synth_particles(1024, 32, Scenario::noise, 41);
    CompressionConfig c;
    c.tolerance_kind = ToleranceKind::nrmse;
    c.tolerance = 1e-3;
    c.segment_share = 1.0;
    auto seg = compress_segment(b, c);
    CHECK(seg.compression_ratio() < 5.0);
    CHECK(nrmse(b.data, reconstruct(seg)) <= 1e-3);
}

TEST_CASE("segment compression honours relfrob and nrmse targets") {
    auto b = synth_particles(301, 20, Scenario::settle, 42, SynthOptions{0.01, 9.81, 0.5, 0.5, 0.01});
    for (double tau : {1e-1, 1e-2, 1e-4}) {
        CompressionConfig c;
        c.segment_length = 20;
        c.segment_share = 1.0;
        c.tolerance = tau;
        c.tolerance_kind = ToleranceKind::relfrob;
        auto seg = compress_segment(b, c);
        CHECK(seg.plan.has_padding());
        CHECK(seg.stats.entry_count == b.data.size());
        CHECK(rel_frob(b.data, reconstruct(seg)) <= tau);
        c.tolerance_kind = ToleranceKind::nrmse;
        seg = compress_segment(b, c);
        CHECK(nrmse(b.data, reconstruct(seg)) <= tau);
        CHECK(seg.tolerance_spent <= seg.tolerance_budget);
    }
}

TEST_CASE("level option controls tensorization depth") {
    std::mt19937_64 rng(43);
    auto x = test::random_tensor({16, 8, 3}, rng);
    auto c = relfrob_config(1e-3, 16);
    c.level = 1;
    auto flat = compress_tensor_segment(x, c, 0);
    CHECK(flat.tt.dims() == Extents{16, 8, 3});
    c.level = 0;
    auto deep = compress_tensor_segment(x, c, 0);
    CHECK(deep.tt.dims() == Extents{2, 2, 2, 2, 2, 2, 2, 3});
    c.level = 2;
    auto mid = compress_tensor_segment(x, c, 0);
    CHECK(mid.tt.dims() == Extents{8, 2, 4, 2, 3});
}

TEST_CASE("reordering permutes particles and reconstruction undoes it") {
    auto b = synth_particles(200, 8, Scenario::settle, 44);
    for (auto policy : {ReorderPolicy::per_segment, ReorderPolicy::per_timestep}) {
        CompressionConfig c;
        c.reorder = policy;
        c.tolerance = 0.0;
        c.segment_length = 8;
        auto [data, blocks] = reorder_particles(b, c);
        CHECK(blocks.size() == (policy == ReorderPolicy::per_segment ? 1u : 8u));
        const auto& perm = blocks.front().perm;
        CHECK(data.at({1, 1, 2}) == b.data.at({1, perm[0] + 1, 2}));
        auto seg = compress_segment(b, c);
        auto y = reconstruct(seg);
        CHECK(test::max_abs_diff(y.values(), b.data.values()) <= 1e-12);
    }
}

TEST_CASE("merge_stack: self merge collapses under rounding") {
    std::mt19937_64 rng(45);
    auto x = test::random_tensor({4, 6, 2}, rng);
    auto c = relfrob_config(1e-6, 4);
    auto a = compress_tensor_segment(x, c, 0);
    auto b = compress_tensor_segment(x, c, 4);
    std::vector<CompressedSegment> parts{a, b};
    auto m = merge_stack(parts, 1e-10);
    CHECK(m.tt.dims().back() == 2);
    for (std::size_t k = 0; k < a.tt.order(); ++k) CHECK(m.tt.ranks()[k] == a.tt.ranks()[k]);
    CHECK(m.tolerance_spent == doctest::Approx(compose_tolerance(1e-6, 1e-10)));
    CHECK(m.level == 1);
    CHECK(m.time_range == std::array<std::size_t, 2>{0, 7});
    CHECK(m.stack_extents == std::vector<std::size_t>{2});

    CompressedSegment far = b;
    far.time_range = {9, 12};
    std::vector<CompressedSegment> gap{a, far};
    CHECK_THROWS_AS(merge_stack(gap, 0.0), MergeError);
    auto other = compress_tensor_segment(test::random_tensor({4, 5, 2}, rng), c, 4);
    std::vector<CompressedSegment> mismatch{a, other};
    CHECK_THROWS_AS(merge_stack(mismatch, 0.0), MergeError);
}

TEST_CASE("merge_concat: 8x3x2 tensor from two halves") {
    std::mt19937_64 rng(46);
    auto x = test::random_tensor({8, 3, 2}, rng);
    const double tau = 1e-2, tau_r = 1e-2;
    auto c = relfrob_config(tau, 4, MergeMode::concat);
    auto parts = split_compress(x, c);
    REQUIRE(parts.size() == 2);
    CHECK(parts[0].tt.dims() == Extents{4, 3, 2});

    auto exact = merge_concat(parts, 1, 0.0);
    for (std::size_t k = 1; k < exact.tt.order(); ++k)
        CHECK(exact.tt.ranks()[k] == parts[0].tt.ranks()[k] + parts[1].tt.ranks()[k]);
    auto dense = test::dense_concat(reconstruct(parts[0]), reconstruct(parts[1]), 1);
    CHECK(test::max_abs_diff(reconstruct(exact).values(), dense.values()) <= 1e-12 * frobenius_norm(x));

    auto m = merge_concat(parts, 1, tau_r);
    CHECK(m.tt.dims() == Extents{8, 3, 2});
    CHECK(m.plan.original_dims == Extents{8, 3, 2});
    CHECK(rel_frob(x, reconstruct(m)) <= compose_tolerance(tau, tau_r));

    // concatenation along a tensorized axis is refused
    auto stacked = split_compress(x, relfrob_config(tau, 4));
    CHECK_THROWS_AS(merge_concat(stacked, 1, 0.0), MergeError);
}

TEST_CASE("merge_concat along a non-time axis") {
    std::mt19937_64 rng(47);
    auto c = relfrob_config(1e-8, 4);
    c.level = 1;
    auto xa = test::random_tensor({4, 3, 2}, rng), xb = test::random_tensor({4, 5, 2}, rng);
    std::vector<CompressedSegment> parts{compress_tensor_segment(xa, c, 0), compress_tensor_segment(xb, c, 0)};
    auto m = merge_concat(parts, 2, 0.0);
    CHECK(m.data_dims() == Extents{4, 8, 2});
    auto dense = test::dense_concat(xa, xb, 2);
    CHECK(rel_frob(dense, reconstruct(m)) <= 1e-7);
}

TEST_CASE("merge tree level counts and identity") {
    CHECK(merge_level_count(32, 2, MergeMode::stack) == 5);
    CHECK(merge_level_count(1, 2, MergeMode::stack) == 0);
    CHECK(merge_level_count(27, 3, MergeMode::stack) == 3);
    CHECK(merge_level_count(5, 2, MergeMode::concat) == 3);
    CHECK_THROWS_AS(merge_level_count(6, 4, MergeMode::stack), ConfigError);

    std::mt19937_64 rng(48);
    auto x = test::random_tensor({64, 4, 2}, rng);
    auto c = relfrob_config(1e-2, 2);
    c.segment_share = 0.1;
    auto parts = split_compress(x, c);
    REQUIRE(parts.size() == 32);
    const auto schedule = rounding_schedule(1e-2, 1e-3, 5);
    auto levels = merge_tree(parts, 2, schedule, MergeMode::stack, 3);
    REQUIRE(levels.size() == 6);
    std::vector<std::size_t> sizes;
    for (const auto& l : levels) sizes.push_back(l.size());
    CHECK(sizes == std::vector<std::size_t>{32, 16, 8, 4, 2, 1});
    CHECK(rel_frob(x, reconstruct(levels.back().front())) <= 1e-2);
    CHECK(levels.back().front().tolerance_spent <= 1e-2 * (1 + 1e-12));

    std::vector<CompressedSegment> one{parts.front()};
    auto single = merge_tree(one, 2, {}, MergeMode::stack);
    REQUIRE(single.size() == 1);
    CHECK(single[0].size() == 1);
}

TEST_CASE("merge tree refuses exhausted budgets up front") {
    std::mt19937_64 rng(49);
    auto x = test::random_tensor({8, 4, 2}, rng);
    auto parts = split_compress(x, relfrob_config(1e-2, 2));
    for (auto& p : parts) p.tolerance_value = 1e-2;
    std::vector<double> greedy{1e-2, 1e-2};
    CHECK_THROWS_AS(merge_tree(parts, 2, greedy), ConfigError);
    std::vector<double> short_schedule{0.0};
    CHECK_THROWS_AS(merge_tree(parts, 2, short_schedule), ConfigError);
    CHECK(rounding_schedule(1e-2, 1e-2, 3) == std::vector<double>{0, 0, 0});
    auto s = rounding_schedule(0.1, 0.05, 4);
    double spent = 0.05;
    for (double r : s) spent = compose_tolerance(spent, r);
    CHECK(spent <= 0.1);
    CHECK(spent == doctest::Approx(0.1).epsilon(1e-10));
}

TEST_CASE("error budget property on random 8x8x8 splits") {
    std::mt19937_64 rng(50);
    for (std::size_t segments : {2, 4, 8})
        for (double tau : {1e-2, 1e-4})
            for (double tau_r : {1e-2, 1e-4})
                for (auto mode : {MergeMode::stack, MergeMode::concat}) {
                    auto x = test::random_tensor({8, 8, 8}, rng);
                    auto parts = split_compress(x, relfrob_config(tau, 8 / segments, mode));
                    auto m = mode == MergeMode::stack ? merge_stack(parts, tau_r) : merge_concat(parts, 1, tau_r);
                    CHECK(rel_frob(x, reconstruct(m)) <= compose_tolerance(tau, tau_r));
                    CHECK(m.tolerance_spent <= compose_tolerance(tau, tau_r) * (1 + 1e-12));
                }
}

TEST_CASE("unrounded merges are exact") {
    std::mt19937_64 rng(51);
    for (int trial = 0; trial < 5; ++trial) {
        auto x = test::random_tensor({8, 4, 3}, rng);
        auto parts = split_compress(x, relfrob_config(1e-2, 2));
        std::vector<DenseTensor> pieces;
        for (const auto& p : parts) pieces.push_back(reconstruct(p));
        auto m = merge_stack(parts, 0.0);
        DenseTensor joined = pieces[0];
        for (std::size_t i = 1; i < pieces.size(); ++i) joined = test::dense_concat(joined, pieces[i], 1);
        CHECK(test::max_abs_diff(reconstruct(m).values(), joined.values()) <= 1e-12 * frobenius_norm(x));
    }
}

TEST_CASE("short final segment is padded in time and cropped on reconstruction") {
    std::mt19937_64 rng(52);
    auto x = test::random_tensor({56, 4, 3}, rng);
    auto c = relfrob_config(2e-3, 16);
    c.segment_share = 0.5;
    auto parts = compress_stream(x, c, true);
    REQUIRE(parts.size() == 4);
    CHECK(parts.back().timesteps() == 8);
    CHECK(parts.back().plan.original_dims == parts.front().plan.original_dims);
    auto levels = merge_tree(parts, 2, rounding_schedule(2e-3, 1e-3, 2));
    const auto& top = levels.back().front();
    CHECK(top.data_dims() == Extents{56, 4, 3});
    CHECK(rel_frob(x, reconstruct(top)) <= 2e-3);

    // a short segment cannot sit before a full one
    std::vector<CompressedSegment> wrong{parts[3], parts[0]};
    wrong[1].time_range = {56, 71};
    CHECK_THROWS_AS(merge_stack(wrong, 0.0), MergeError);
}

TEST_CASE("accessor matches reconstruction entrywise") {
    auto b = synth_particles(40, 30, Scenario::settle, 53);
    CompressionConfig c;
    c.tolerance = 1e-4;
    c.segment_length = 8;
    c.reorder = ReorderPolicy::per_segment;
    auto parts = compress_stream(b, c, true);
    REQUIRE(parts.size() == 4);
    auto levels = merge_tree(parts, 2, rounding_schedule(1e-4, 5e-5, 2));
    for (const auto* seg : {&parts[1], &parts[3], &levels[1][1], &levels.back().front()}) {
        auto full = reconstruct(*seg);
        SegmentAccessor acc(*seg);
        test::for_each_index(full.dims(), [&](const MultiIndex& idx) {
            CHECK(acc.get(idx) == doctest::Approx(full.at(idx)).epsilon(1e-12).scale(1.0));
        });
        const std::vector<std::size_t> lo{2, 3, 1}, hi{seg->timesteps(), 17, 2};
        auto box = acc.region(lo, hi);
        CHECK(box.dims() == Extents{seg->timesteps() - 1, 15, 2});
        CHECK(box.at({1, 1, 1}) == doctest::Approx(full.at({2, 3, 1})));
        CHECK_THROWS_AS(acc.get(std::vector<std::size_t>{seg->timesteps() + 1, 1, 1}), RangeError);
    }
}

TEST_CASE("segment files roundtrip and compression is deterministic across jobs") {
    auto b = synth_particles(64, 32, Scenario::settle, 54, SynthOptions{0.01, 9.81, 0.5, 0.5, 0.01});
    CompressionConfig c;
    c.tolerance_kind = ToleranceKind::nrmse;
    c.tolerance = 1e-2;
    c.segment_length = 8;
    auto serial = compress_stream(b, c, true);
    c.jobs = 4;
    auto parallel = compress_stream(b, c, true);
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i)
        CHECK(encode_ttc1(serial[i].tt, segment_metadata(serial[i])) ==
              encode_ttc1(parallel[i].tt, segment_metadata(parallel[i])));

    auto dir = scratch("files");
    for (const auto& s : serial) write_segment(dir, s);
    auto files = list_segments(dir);
    REQUIRE(files.size() == 4);
    CHECK(files[1].filename() == "seg_8_15.ttc");
    for (std::size_t i = 0; i < files.size(); ++i) {
        auto back = read_segment(files[i]);
        CHECK(encode_ttc1(back.tt, segment_metadata(back)) == encode_ttc1(serial[i].tt, segment_metadata(serial[i])));
        CHECK(back.permutations.front().perm == serial[i].permutations.front().perm);
    }

    // metadata that disagrees with the cores is rejected
    auto meta = segment_metadata(serial[0]);
    meta["stack_extents"] = {2};
    CHECK_THROWS_AS(segment_from_archive(serial[0].tt, meta), FormatError);
    meta = segment_metadata(serial[0]);
    meta.erase("plan");
    CHECK_THROWS_AS(segment_from_archive(serial[0].tt, meta), FormatError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("lossless pipeline reproduces the run directory") {
    auto dir = scratch("lossless");
    auto b = synth_particles(100, 20, Scenario::settle, 55);
    write_snapshots(dir / "run", b);
    auto loaded = load_snapshots(dir / "run");
    CompressionConfig c;
    c.tolerance = 0.0;
    c.segment_length = 10;
    auto parts = compress_stream(loaded, c, false);
    for (const auto& p : parts) write_segment(dir / "out", p);
    std::vector<CompressedSegment> back;
    for (const auto& f : list_segments(dir / "out")) back.push_back(read_segment(f));
    auto levels = merge_tree(back, 2, std::vector<double>{0.0});
    auto y = reconstruct(levels.back().front());
    CHECK(y.dims() == b.data.dims());
    CHECK(test::diff_norm(y.values(), b.data.values()) <= 1e-10 * frobenius_norm(b.data));
    std::filesystem::remove_all(dir);
}
