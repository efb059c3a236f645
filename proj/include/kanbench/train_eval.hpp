#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kanbench/deeponet.hpp"
#include "kanbench/graph_sim.hpp"
#include "kanbench/pde_data.hpp"

namespace kanbench {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct NamedParam {
    std::string name;
    Tensor* value = nullptr;
};

/// Bias-corrected Adam over a fixed parameter list; moments mirror parameter
/// shapes. The optimizer owns the updates; parameters are mutated in place by
/// the single training thread.
class AdamState {
public:
    AdamState(std::vector<NamedParam> params, AdamConfig cfg);

    /// Applies one update from the gradient map (missing entries = zero grad).
    void step(const GradientMap& grads);

    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }
    std::int64_t step_count() const { return t_; }

private:
    std::vector<NamedParam> params_;
    std::vector<std::vector<double>> m_, v_;
    AdamConfig cfg_;
    std::int64_t t_ = 0;
};

struct LrSchedule {
    enum class Kind { constant, step_decay };
    Kind kind = Kind::constant;
    double factor = 0.5;
    double interval_frac = 0.2; // of total epochs/steps

    double at(double base_lr, std::int64_t epoch, std::int64_t total) const;
};

struct TrainConfig {
    double lr = 1e-4;
    LrSchedule schedule;
    std::int64_t batch = 32;
    std::int64_t epochs = 100;     // DeepONet loops over epochs
    std::int64_t steps = 0;        // GNS loops over window steps
    std::uint64_t seed = 0;
    std::int64_t query_sub = 0;    // queries per step (0 = all); DeepONet only
    double input_noise_std = 0.0;  // random-walk training noise; GNS only
    std::int64_t test_cadence = 0; // epochs between test-loss records (0 = off)
    AdamConfig adam;
};

struct TrainHistory {
    std::vector<double> train_loss;                      // one per epoch / step
    std::vector<std::pair<std::int64_t, double>> test_loss;
    double wall_seconds = 0.0;
    std::int64_t total_steps = 0;

    double seconds_per_1000_steps() const {
        return total_steps > 0 ? wall_seconds / static_cast<double>(total_steps) * 1000.0 : 0.0;
    }
};

TrainHistory train_deeponet(DeepOnetModel& model, const OperatorDataset& ds,
                            const TrainConfig& cfg);

TrainHistory train_gns(GnsModel& model, const TrajectoryDataset& ds, const TrainConfig& cfg);

/// ||pred - truth||_2 / ||truth||_2.
double rel_l2(std::span<const double> pred, std::span<const double> truth);

struct EvalResult {
    double mse = 0.0;
    double rel_l2_mean = 0.0;    // per-sample mean (primary convention)
    double rel_l2_stacked = 0.0; // single ratio over the stacked vectors
    std::int64_t skipped = 0;    // zero-norm samples excluded from the mean
};

/// Full-query evaluation over the given sample indices.
EvalResult evaluate_deeponet(const DeepOnetModel& model, const OperatorDataset& ds,
                             std::span<const std::int64_t> indices);

/// Mean one-step MSE on normalized accelerations over deterministic windows
/// drawn from the listed trajectories.
double evaluate_gns_onestep(const GnsModel& model, const TrajectoryDataset& ds,
                            std::span<const std::int64_t> indices, std::int64_t n_windows,
                            std::uint64_t seed);

/// Largest pairwise ratio ||f(u_i) - f(u_j)|| / ||u_i - u_j|| under 2-norms.
/// Duplicate inputs are skipped and counted.
double estimate_lipschitz(const std::function<std::vector<double>(std::span<const double>)>& f,
                          const std::vector<std::vector<double>>& inputs,
                          std::int64_t* skipped_pairs = nullptr);

/// Per-level test rel-l2 of `model` on noise-perturbed, re-solved datasets.
std::vector<std::pair<double, double>> noise_robustness_eval(const DeepOnetModel& model,
                                                             const OperatorDataset& ds,
                                                             std::span<const double> levels,
                                                             std::uint64_t seed);

/// Linear-interpolated percentile of a sample (q in [0, 1]).
double percentile_linear(std::vector<double> values, double q);

struct EnergyErrorStats {
    std::vector<double> t_over_tau;
    std::vector<double> ke_mean, ke_median, ke_p99;
    std::vector<double> pe_mean, pe_median, pe_p99;
};

/// Per-frame absolute error of normalized energies across rollouts, with
/// mean / median / 99th-percentile statistics over the rollout set.
EnergyErrorStats energy_error_stats(const std::vector<EnergySeries>& predicted,
                                    const std::vector<EnergySeries>& truth, double tau_c,
                                    double frame_dt);

/// FNV-1a content hashes used to make report numbers traceable.
std::uint64_t fnv1a(const void* data, std::size_t nbytes, std::uint64_t h = 14695981039346656037ull);
std::uint64_t hash_tensor(const Tensor& t);

} // namespace kanbench
