#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "qtt/errors.hpp"
#include "qtt/synth_data.hpp"
#include "qtt/tt.hpp"
#include "test_support.hpp"

using namespace qtt;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("qtt_synth_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

bool bitwise_equal(const DenseTensor& a, const DenseTensor& b) {
    return a.dims() == b.dims() && std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("sample_univariate matches direct evaluation") {
    auto f = sample_univariate(0.1, 1);
    REQUIRE(f.size() == 2);
    CHECK(f.at({1}) == doctest::Approx(std::log(1.0 / 0.35)).epsilon(1e-14));
    CHECK(f.at({1}) == doctest::Approx(1.0498).epsilon(1e-4));

    const std::size_t d = 12;
    const double delta = 1e-5;
    auto g = sample_univariate(delta, d);
    const std::size_t n = std::size_t{1} << d;
    for (std::size_t i = 1; i <= n; ++i) CHECK(g.at({i}) == g.at({n + 1 - i}));

    // long double oracle at random indices
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<std::size_t> pick(1, n);
    for (int k = 0; k < 20; ++k) {
        const std::size_t i = pick(rng);
        const long double x = (static_cast<long double>(i) - 0.5L) / static_cast<long double>(n);
        const long double ref = -std::log(std::fabs(x - 0.5L) + static_cast<long double>(delta));
        CHECK(std::fabs(g.at({i}) - static_cast<double>(ref)) <= 1e-12 * std::fabs(static_cast<double>(ref)));
    }

    // large delta flattens toward ln(1/delta)
    auto flat = sample_univariate(1e6, 4);
    for (double v : flat.values()) CHECK(v == doctest::Approx(std::log(1e-6)).epsilon(1e-6));

    CHECK_THROWS_AS(sample_univariate(0.0, 3), RangeError);
    CHECK_THROWS_AS(sample_univariate(0.1, 25), RangeError);
}

TEST_CASE("sample_kernel_matrix is symmetric with constant diagonal") {
    const double delta = 1e-3;
    auto k = sample_kernel_matrix(delta, 6);
    REQUIRE(k.rows() == 64);
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::size_t> pick(1, 64);
    for (std::size_t i = 1; i <= 64; ++i) {
        CHECK(k.at(i, i) == doctest::Approx(std::log(1.0 / delta)).epsilon(1e-14));
        for (std::size_t j = 1; j <= 64; ++j) CHECK(k.at(i, j) == k.at(j, i));
    }
    for (int t = 0; t < 20; ++t) {
        const std::size_t i = pick(rng), j = pick(rng);
        const long double xi = (i - 0.5L) / 64.0L, xj = (j - 0.5L) / 64.0L;
        const double ref = static_cast<double>(-std::log(std::fabs(xi - xj) + static_cast<long double>(delta)));
        CHECK(std::fabs(k.at(i, j) - ref) <= 1e-12 * std::fabs(ref));
    }
    CHECK_THROWS_AS(sample_kernel_matrix(delta, 13), RangeError);
}

TEST_CASE("synth_particles is deterministic and shaped n_t x n_p x 3") {
    for (auto s : {Scenario::ballistic, Scenario::settle, Scenario::noise}) {
        auto a = synth_particles(50, 20, s, 7);
        auto b = synth_particles(50, 20, s, 7);
        auto c = synth_particles(50, 20, s, 8);
        CHECK(a.data.dims() == Extents{20, 50, 3});
        CHECK(bitwise_equal(a.data, b.data));
        CHECK_FALSE(bitwise_equal(a.data, c.data));
        CHECK(a.positions_first.size() == 50);
        CHECK(a.positions_all.size() == 20);
        CHECK(a.positions_first[3][2] == a.data.at({1, 4, 3}));
        CHECK(parse_scenario(scenario_name(s)) == s);
    }
    CHECK_THROWS_AS(parse_scenario("wobble"), ConfigError);
}

TEST_CASE("ballistic trajectories have time rank at most 3") {
    auto b = synth_particles(40, 64, Scenario::ballistic, 3);
    auto tt = tt_svd(b.data, 1e-10);
    CHECK(tt.ranks()[1] <= 3);
}

TEST_CASE("settle particles stay above the floor and come to rest") {
    auto b = synth_particles(200, 400, Scenario::settle, 5);
    for (double z : std::span(b.data.values()).subspan(2 * 400 * 200)) CHECK(z >= -1e-12);
    // the final two timesteps coincide once every particle rests
    std::size_t resting = 0;
    for (std::size_t p = 1; p <= 200; ++p)
        if (b.data.at({399, p, 3}) == b.data.at({400, p, 3})) ++resting;
    CHECK(resting == 200);
}

TEST_CASE("snapshot directories roundtrip bitwise") {
    auto dir = scratch("roundtrip");
    auto b = synth_particles(30, 9, Scenario::settle, 2, SynthOptions{0.01, 9.81, 0.5, 0.5, 0.02});
    b.first_timestep = 100;
    write_snapshots(dir, b);
    auto back = load_snapshots(dir);
    CHECK(bitwise_equal(back.data, b.data));
    CHECK(back.first_timestep == 100);
    CHECK(back.timestep_size == b.timestep_size);
    CHECK(back.component_names == b.component_names);
    REQUIRE(back.particle_radius.has_value());
    CHECK(*back.particle_radius == 0.02);
    CHECK(back.positions_first == b.positions_first);
    std::filesystem::remove_all(dir);
}

TEST_CASE("single timestep of 4 particles loads as 1x4x3") {
    auto dir = scratch("single");
    SnapshotBatch b;
    b.data = test::random_tensor({1, 4, 3}, *std::make_unique<std::mt19937_64>(4));
    attach_positions_from_components(b);
    write_snapshots(dir, b);
    auto back = load_snapshots(dir);
    CHECK(back.data.dims() == Extents{1, 4, 3});
    CHECK(bitwise_equal(back.data, b.data));
    std::filesystem::remove_all(dir);
}

TEST_CASE("ingestion errors name the offending timestep") {
    auto dir = scratch("bad");
    auto b = synth_particles(6, 4, Scenario::ballistic, 1);
    write_snapshots(dir, b);
    std::filesystem::resize_file(dir / "step_2.bin", 5 * 3 * 8);
    try {
        load_snapshots(dir);
        FAIL("expected IngestionError");
    } catch (const IngestionError& e) {
        CHECK(std::string(e.what()).find("timestep 2") != std::string::npos);
    }

    std::filesystem::remove(dir / "step_2.bin");
    CHECK_THROWS_AS(load_snapshots(dir), IngestionError);

    {
        std::ofstream(dir / "meta.json") << "{ not json";
    }
    CHECK_THROWS_AS(load_snapshots(dir), IngestionError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("slice_time keeps positions and offsets") {
    auto b = synth_particles(10, 12, Scenario::ballistic, 9);
    b.first_timestep = 5;
    auto s = b.slice_time(4, 3);
    CHECK(s.data.dims() == Extents{3, 10, 3});
    CHECK(s.first_timestep == 9);
    CHECK(s.data.at({2, 7, 1}) == b.data.at({6, 7, 1}));
    CHECK(s.positions_first == b.positions_all[4]);
    CHECK_THROWS_AS(b.slice_time(10, 3), RangeError);
}
