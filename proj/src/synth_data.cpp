#include "qtt/synth_data.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "binary_io.hpp"
#include "json.hpp"
#include "qtt/errors.hpp"

namespace qtt {

namespace {

// deterministic across standard libraries: raw 53-bit draws from mt19937_64
class PortableUniform {
public:
    explicit PortableUniform(std::uint64_t seed) : engine_(seed) {}
    double operator()(double lo, double hi) {
        const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }

private:
    std::mt19937_64 engine_;
};

struct Particle {
    double x, y, z, vx, vy, vz;
    bool resting = false;
};

// exact flight under gravity with bounces on z = 0
void advance(Particle& p, double dt, const SynthOptions& o) {
    if (p.resting) return;
    double remaining = dt;
    while (remaining > 0.0) {
        // z + vz t - g t^2 / 2 = 0
        const double disc = p.vz * p.vz + 2.0 * o.gravity * std::max(p.z, 0.0);
        const double t_hit = (p.vz + std::sqrt(disc)) / o.gravity;
        if (t_hit > remaining) {
            p.x += p.vx * remaining;
            p.y += p.vy * remaining;
            p.z += p.vz * remaining - 0.5 * o.gravity * remaining * remaining;
            p.vz -= o.gravity * remaining;
            return;
        }
        p.x += p.vx * t_hit;
        p.y += p.vy * t_hit;
        p.z = 0.0;
        const double v_impact = p.vz - o.gravity * t_hit;
        p.vz = -o.restitution * v_impact;
        p.vx *= o.horizontal_damping;
        p.vy *= o.horizontal_damping;
        remaining -= t_hit;
        if (p.vz < 1e-3) {
            p.vz = p.vx = p.vy = 0.0;
            p.resting = true;
            return;
        }
    }
}

std::filesystem::path step_path(const std::filesystem::path& dir, std::size_t k) {
    return dir / ("step_" + std::to_string(k) + ".bin");
}

}  // namespace

SnapshotBatch SnapshotBatch::slice_time(std::size_t first, std::size_t count) const {
    if (first + count > n_t() || count == 0) throw RangeError("slice_time: range outside batch");
    const std::size_t nt = n_t(), np = n_p(), nc = n_c();
    std::vector<double> v(count * np * nc);
    const auto src = data.values();
    for (std::size_t c = 0; c < nc; ++c)
        for (std::size_t p = 0; p < np; ++p)
            for (std::size_t t = 0; t < count; ++t) v[t + count * (p + np * c)] = src[first + t + nt * (p + np * c)];
    SnapshotBatch out;
    out.data = DenseTensor({count, np, nc}, std::move(v));
    if (!positions_all.empty()) {
        out.positions_all.assign(positions_all.begin() + first, positions_all.begin() + first + count);
        out.positions_first = out.positions_all.front();
    } else if (first == 0) {
        out.positions_first = positions_first;
    }
    out.timestep_size = timestep_size;
    out.first_timestep = first_timestep + first;
    out.component_names = component_names;
    out.particle_radius = particle_radius;
    return out;
}

void validate_batch(const SnapshotBatch& batch) {
    if (batch.data.order() != 3) throw ShapeError("snapshot batch must be n_t x n_p x n_c");
    for (auto n : batch.data.dims())
        if (n == 0) throw ShapeError("snapshot batch has a zero extent");
    if (!batch.positions_first.empty() && batch.positions_first.size() != batch.n_p())
        throw ShapeError("positions_first length differs from particle count");
    if (!batch.positions_all.empty()) {
        if (batch.positions_all.size() != batch.n_t()) throw ShapeError("positions_all length differs from n_t");
        for (const auto& step : batch.positions_all)
            if (step.size() != batch.n_p()) throw ShapeError("positions_all entry has wrong particle count");
    }
    for (const auto& p : batch.positions_first)
        for (double c : p)
            if (!std::isfinite(c)) throw DataError("non-finite particle position");
}

void attach_positions_from_components(SnapshotBatch& batch) {
    if (batch.n_c() < 3) throw ShapeError("positions need at least three components");
    const std::size_t nt = batch.n_t(), np = batch.n_p();
    const auto v = batch.data.values();
    batch.positions_all.assign(nt, std::vector<Point3>(np));
    for (std::size_t t = 0; t < nt; ++t)
        for (std::size_t p = 0; p < np; ++p)
            for (std::size_t c = 0; c < 3; ++c) batch.positions_all[t][p][c] = v[t + nt * (p + np * c)];
    batch.positions_first = batch.positions_all.front();
}

DenseTensor sample_univariate(double delta, std::size_t d) {
    if (!(delta > 0.0)) throw RangeError("sample_univariate: delta must be positive");
    if (d < 1 || d > 24) throw RangeError("sample_univariate: d must lie in [1, 24]");
    const std::size_t n = std::size_t{1} << d;
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        v[i] = -std::log(std::abs(x - 0.5) + delta);
    }
    return DenseTensor({n}, std::move(v));
}

DenseMatrix sample_kernel_matrix(double delta, std::size_t d) {
    if (!(delta > 0.0)) throw RangeError("sample_kernel_matrix: delta must be positive");
    if (d < 1 || d > 12) throw RangeError("sample_kernel_matrix: d must lie in [1, 12]");
    const std::size_t n = std::size_t{1} << d;
    DenseMatrix k(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const double y = (static_cast<double>(j) + 0.5) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
            k(i, j) = -std::log(std::abs(x - y) + delta);
        }
    }
    return k;
}

Scenario parse_scenario(const std::string& name) {
    if (name == "ballistic") return Scenario::ballistic;
    if (name == "settle") return Scenario::settle;
    if (name == "noise") return Scenario::noise;
    throw ConfigError("unknown scenario '" + name + "' (expected ballistic, settle or noise)");
}

std::string scenario_name(Scenario s) {
    switch (s) {
        case Scenario::ballistic: return "ballistic";
        case Scenario::settle: return "settle";
        case Scenario::noise: return "noise";
    }
    return "unknown";
}

SnapshotBatch synth_particles(std::size_t n_p, std::size_t n_t, Scenario scenario, std::uint64_t seed,
                              const SynthOptions& o) {
    if (n_p < 1 || n_t < 1) throw RangeError("synth_particles: extents must be >= 1");
    if (!(o.dt > 0.0)) throw RangeError("synth_particles: dt must be positive");
    PortableUniform rng(seed);
    std::vector<double> v(n_t * n_p * 3);
    auto put = [&](std::size_t t, std::size_t p, double x, double y, double z) {
        v[t + n_t * p] = x;
        v[t + n_t * (p + n_p)] = y;
        v[t + n_t * (p + 2 * n_p)] = z;
    };

    if (scenario == Scenario::noise) {
        for (std::size_t p = 0; p < n_p; ++p)
            for (std::size_t t = 0; t < n_t; ++t) {
                double x = rng(0, 1), y = rng(0, 1), z = rng(0, 1);
                put(t, p, x, y, z);
            }
    } else {
        for (std::size_t p = 0; p < n_p; ++p) {
            Particle q{};
            q.x = rng(0, 1);
            q.y = rng(0, 1);
            q.z = rng(0.5, 1.5);
            q.vx = rng(-0.2, 0.2);
            q.vy = rng(-0.2, 0.2);
            q.vz = rng(-0.2, 0.2);
            if (scenario == Scenario::ballistic) {
                for (std::size_t t = 0; t < n_t; ++t) {
                    const double s = static_cast<double>(t) * o.dt;
                    put(t, p, q.x + q.vx * s, q.y + q.vy * s, q.z + q.vz * s - 0.5 * o.gravity * s * s);
                }
            } else {
                for (std::size_t t = 0; t < n_t; ++t) {
                    if (t > 0) advance(q, o.dt, o);
                    put(t, p, q.x, q.y, q.z);
                }
            }
        }
    }

    SnapshotBatch b;
    b.data = DenseTensor({n_t, n_p, 3}, std::move(v));
    b.timestep_size = o.dt;
    b.component_names = {"x", "y", "z"};
    if (o.particle_radius > 0.0) b.particle_radius = o.particle_radius;
    attach_positions_from_components(b);
    return b;
}

void write_snapshots(const std::filesystem::path& dir, const SnapshotBatch& batch) {
    validate_batch(batch);
    std::filesystem::create_directories(dir);
    nlohmann::json meta = {{"n_t", batch.n_t()},
                           {"n_p", batch.n_p()},
                           {"n_c", batch.n_c()},
                           {"dt", batch.timestep_size},
                           {"first_timestep", batch.first_timestep},
                           {"components", batch.component_names},
                           {"positions", !batch.positions_first.empty()}};
    if (batch.particle_radius) meta["particle_radius"] = *batch.particle_radius;
    {
        std::ofstream out(dir / "meta.json");
        out << meta.dump(2) << '\n';
        if (!out) throw IngestionError("cannot write " + (dir / "meta.json").string());
    }
    const std::size_t nt = batch.n_t(), np = batch.n_p(), nc = batch.n_c();
    const auto v = batch.data.values();
    std::vector<double> step(np * nc);
    for (std::size_t t = 0; t < nt; ++t) {
        for (std::size_t c = 0; c < nc; ++c)
            for (std::size_t p = 0; p < np; ++p) step[p + np * c] = v[t + nt * (p + np * c)];
        detail::ByteWriter w;
        w.put_doubles(step);
        w.save(step_path(dir, t));
    }
}

SnapshotBatch load_snapshots(const std::filesystem::path& dir) {
    const auto meta_path = dir / "meta.json";
    if (!std::filesystem::exists(meta_path)) throw IngestionError("missing " + meta_path.string());
    nlohmann::json meta;
    std::size_t nt = 0, np = 0, nc = 0;
    SnapshotBatch b;
    bool positions = false;
    try {
        std::ifstream in(meta_path);
        meta = nlohmann::json::parse(in);
        nt = meta.at("n_t").get<std::size_t>();
        np = meta.at("n_p").get<std::size_t>();
        nc = meta.at("n_c").get<std::size_t>();
        b.timestep_size = meta.value("dt", 0.0);
        b.first_timestep = meta.value("first_timestep", std::size_t{0});
        b.component_names = meta.value("components", std::vector<std::string>{});
        positions = meta.value("positions", nc >= 3);
        if (meta.contains("particle_radius")) b.particle_radius = meta.at("particle_radius").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError("malformed meta.json: " + std::string(e.what()));
    }
    if (nt == 0 || np == 0 || nc == 0) throw IngestionError("meta.json: extents must be positive");
    if (positions && nc < 3) throw IngestionError("meta.json: positions need at least three components");

    std::vector<double> v(nt * np * nc);
    for (std::size_t t = 0; t < nt; ++t) {
        const auto path = step_path(dir, t);
        if (!std::filesystem::exists(path)) throw IngestionError("timestep " + std::to_string(t) + ": missing " + path.string());
        const auto bytes = std::filesystem::file_size(path);
        if (bytes % (8 * nc) != 0)
            throw IngestionError("timestep " + std::to_string(t) + ": size " + std::to_string(bytes) +
                                 " bytes is not a whole number of particles");
        const auto count = bytes / (8 * nc);
        if (count != np)
            throw IngestionError("timestep " + std::to_string(t) + ": holds " + std::to_string(count) +
                                 " particles, expected " + std::to_string(np));
        detail::ByteReader r = detail::ByteReader::load(path);
        const auto step = r.get_doubles(np * nc);
        for (std::size_t c = 0; c < nc; ++c)
            for (std::size_t p = 0; p < np; ++p) v[t + nt * (p + np * c)] = step[p + np * c];
    }
    b.data = DenseTensor({nt, np, nc}, std::move(v));
    if (positions) attach_positions_from_components(b);
    return b;
}

}  // namespace qtt
