#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qtt/dense_tensor.hpp"
#include "qtt/spatial_order.hpp"

namespace qtt {

/// Raw per-timestep particle data, n_t x n_p x n_c.
struct SnapshotBatch {
    DenseTensor data;
    std::vector<Point3> positions_first;               // n_p positions at the first timestep
    std::vector<std::vector<Point3>> positions_all;    // optional, one entry per timestep
    double timestep_size = 0.0;
    std::size_t first_timestep = 0;                    // global index of timestep 1 of this batch
    std::vector<std::string> component_names;
    std::optional<double> particle_radius;

    std::size_t n_t() const { return data.dims().at(0); }
    std::size_t n_p() const { return data.dims().at(1); }
    std::size_t n_c() const { return data.dims().at(2); }

    /// Timesteps [first, first + count) as a standalone batch (0-based, local).
    SnapshotBatch slice_time(std::size_t first, std::size_t count) const;
};

/// Checks extents and that the position fields match the data.
void validate_batch(const SnapshotBatch& batch);

/// Fills positions_first/positions_all from components 1..3 of the data.
void attach_positions_from_components(SnapshotBatch& batch);

/// F(i) = ln(1 / (|(i - 1/2)/2^d - 1/2| + delta)), i = 1..2^d.
DenseTensor sample_univariate(double delta, std::size_t d);

/// K(i, j) = ln(1 / (|x_i - x_j| + delta)), x_i = (i - 1/2)/2^d.
DenseMatrix sample_kernel_matrix(double delta, std::size_t d);

enum class Scenario { ballistic, settle, noise };

Scenario parse_scenario(const std::string& name);
std::string scenario_name(Scenario s);

struct SynthOptions {
    double dt = 0.01;
    double gravity = 9.81;
    double restitution = 0.5;
    double horizontal_damping = 0.5;  // horizontal velocity factor per bounce
    double particle_radius = 0.0;     // 0 leaves the radius unset
};

/// Deterministic synthetic particle trajectories; components are x, y, z.
SnapshotBatch synth_particles(std::size_t n_p, std::size_t n_t, Scenario scenario, std::uint64_t seed,
                              const SynthOptions& options = {});

/// Run directory: meta.json plus step_<k>.bin (k = 0..n_t-1), each n_p x n_c f64 column-major.
void write_snapshots(const std::filesystem::path& dir, const SnapshotBatch& batch);
SnapshotBatch load_snapshots(const std::filesystem::path& dir);

}  // namespace qtt
