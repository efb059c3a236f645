#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kanbench/layers.hpp"
#include "kanbench/particle_data.hpp"
#include "kanbench/tensor_ops.hpp"

namespace kanbench {

struct GraphEdges {
    std::vector<std::int32_t> senders;   // edge (j -> i): sender j
    std::vector<std::int32_t> receivers; // receiver i

    std::int64_t count() const { return static_cast<std::int64_t>(senders.size()); }
};

/// Directed radius graph: edge (j -> i) for every ordered pair with
/// ||p_i - p_j|| < radius, i != j. Edges sorted by (receiver, sender).
GraphEdges build_graph(std::span<const double> positions, std::int64_t n, double radius);
GraphEdges build_graph_brute(std::span<const double> positions, std::int64_t n, double radius);

struct FeaturizeConfig {
    double connect_radius = 0.045;
    double frame_dt = 2.5e-3;
    std::int64_t history = 5; // velocity vectors per node

    std::int64_t node_feature_width() const { return 2 * history + 4; }
    static constexpr std::int64_t kEdgeFeatureWidth = 3;
};

/// Standardization statistics for finite-difference velocities and
/// position-second-difference accelerations, per component.
struct VelAccStats {
    std::array<double, 2> vel_mean{0.0, 0.0}, vel_std{1.0, 1.0};
    std::array<double, 2> acc_mean{0.0, 0.0}, acc_std{1.0, 1.0};
};

/// Train-split statistics of a trajectory dataset.
VelAccStats compute_feature_stats(const TrajectoryDataset& ds, const FeaturizeConfig& cfg);

struct GraphSample {
    Tensor node_features; // [N, 2H+4]
    GraphEdges edges;
    Tensor edge_features; // [E, 3]; undefined when the graph has no edges
    Tensor target_acc;    // [N, 2] normalized; undefined without a target frame

    std::int64_t n_nodes() const { return node_features.dim(0); }
};

/// Builds a graph sample from a window of 6 frames ([t-5 .. t]); a 7th frame,
/// when supplied, yields the normalized acceleration target at t.
/// `frames` is row-major [W, N, 2].
GraphSample featurize(std::span<const double> frames, std::int64_t w, std::int64_t n,
                      const FeaturizeConfig& cfg, const VelAccStats& stats);

/// Encode-process-decode simulator. Message nets g and update nets f are
/// per-round; aggregation is a fixed-order sum over incoming edges; node
/// latents carry residual connections between rounds.
struct GnsModel {
    Network node_encoder, edge_encoder, decoder;
    std::vector<Network> message_nets, update_nets;
    std::int64_t latent = 32;
    FeaturizeConfig feat;
    VelAccStats stats;
    std::string preset;

    std::int64_t rounds() const { return static_cast<std::int64_t>(message_nets.size()); }
};

/// Presets from the study: kan-64, mlp-128, mlp-256, mlp-128-128.
GnsModel build_gns(const std::string& preset, std::int64_t latent, std::int64_t rounds,
                   const FeaturizeConfig& feat, const VelAccStats& stats, std::uint64_t seed);
std::vector<std::string> gns_preset_names();

/// Predicted normalized accelerations [N, 2].
Tensor gns_forward(const GnsModel& model, const GraphSample& sample);

std::int64_t param_count(const GnsModel& model);
void visit_params(GnsModel& model, const ParamVisitor& visit);

struct RolloutResult {
    Tensor positions; // [6 + n_steps, N, 2]
    std::vector<double> per_step_mse; // vs ground truth when supplied
};

/// Autoregressive rollout: featurize the last six frames, predict, integrate
/// p_{t+1} = 2 p_t - p_{t-1} + a dt^2, clamp into the box (the ground-truth
/// simulator clamps the same way).
RolloutResult rollout(const GnsModel& model, std::span<const double> seed_frames,
                      std::int64_t n, std::int64_t n_steps,
                      const Trajectory* ground_truth = nullptr);

/// Rollout driven by an arbitrary acceleration predictor (step, sample) ->
/// normalized accelerations; the plug-in point for oracle tests.
using AccPredictor = std::function<Tensor(std::int64_t step, const GraphSample&)>;
RolloutResult rollout_with(const AccPredictor& predict, const FeaturizeConfig& feat,
                           const VelAccStats& stats, std::span<const double> seed_frames,
                           std::int64_t n, std::int64_t n_steps,
                           const Trajectory* ground_truth = nullptr);

/// Evaluation-time corruption: i.i.d. Gaussian noise on all seed-frame
/// coordinates with std = sqrt(level * mean initial speed).
std::vector<double> inject_input_noise(std::span<const double> frames, std::int64_t w,
                                       std::int64_t n, double level, std::uint64_t seed,
                                       double frame_dt);

void save_gns(const GnsModel& model, const std::filesystem::path& dir);
GnsModel load_gns(const std::filesystem::path& dir);

} // namespace kanbench
