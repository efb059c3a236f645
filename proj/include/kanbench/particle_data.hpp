#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kanbench/tensor.hpp"

namespace kanbench {

/// Soft-sphere discrete-element simulation of unit-mass disks in the unit
/// box. `dt` is the integration substep and must resolve the contact spring
/// (dt < 0.1 sqrt(m/k_n)); every `steps_per_frame` substeps one frame is
/// stored, so trajectories advance frame_dt() = dt * steps_per_frame per frame.
struct SimConfig {
    double dt = 2.5e-4;
    std::int64_t steps_per_frame = 10;
    double gravity = 9.81;
    double radius = 0.015;
    double stiffness = 5e4;        // k_n
    double normal_damping = -1.0;  // c_n; < 0 selects the restitution-matched value
    double wall_restitution = 0.3; // e
    double tangent_damping = 2.0;  // c_t
    double mass = 1.0;

    double frame_dt() const { return dt * static_cast<double>(steps_per_frame); }

    /// Dashpot coefficient giving restitution e for a spring-dashpot contact
    /// with effective mass m_eff.
    static double damping_for_restitution(double e, double m_eff, double k_n);

    /// c_n with the auto default resolved (pair contacts, m_eff = m/2).
    double resolved_normal_damping() const;

    void validate() const;
    nlohmann::json to_json() const;
    static SimConfig from_json(const nlohmann::json& j);
};

struct Trajectory {
    Tensor positions; // [T, N, 2]
    SimConfig config;

    std::int64_t frames() const { return positions.dim(0); }
    std::int64_t particles() const { return positions.dim(1); }
};

/// Steps the simulator for n_steps frames from the given state; the returned
/// trajectory stores n_steps + 1 frames including the initial one.
Trajectory simulate_particles(const SimConfig& cfg, std::span<const double> pos0,
                              std::span<const double> vel0, std::int64_t n_steps);

/// Contact candidate pairs (i < j, sorted) within `reach`; the cell-grid and
/// brute-force versions must agree exactly.
std::vector<std::pair<std::int32_t, std::int32_t>>
contact_pairs_grid(std::span<const double> pos, std::int64_t n, double reach);
std::vector<std::pair<std::int32_t, std::int32_t>>
contact_pairs_brute(std::span<const double> pos, std::int64_t n, double reach);

struct TrajectoryDataset {
    std::vector<Trajectory> trajectories;
    std::vector<std::int64_t> train_idx, test_idx;
    nlohmann::json metadata;

    std::int64_t n_trajectories() const { return static_cast<std::int64_t>(trajectories.size()); }
};

/// Block-drop scenes: each trajectory drops 1-2 rectangular particle blocks
/// with a random per-block initial velocity.
TrajectoryDataset make_trajectory_dataset(std::int64_t n_traj, std::int64_t n_particles,
                                          std::int64_t steps, std::uint64_t seed,
                                          const SimConfig& cfg, std::int64_t n_train,
                                          std::int64_t n_test);

/// Kinetic and potential energy per frame, both normalized by the initial
/// potential energy; velocities from central differences on stored frames.
struct EnergySeries {
    std::vector<double> kinetic;
    std::vector<double> potential;
};
EnergySeries compute_energies(const Trajectory& traj);

/// Collapse timescale sqrt(2 h0 / g) with h0 the initial column height.
double critical_time(const Trajectory& traj);

void save_trajectories(const TrajectoryDataset& ds, const std::filesystem::path& dir);
TrajectoryDataset load_trajectories(const std::filesystem::path& dir);

} // namespace kanbench
