#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "kanbench/train_eval.hpp"

namespace kanbench {

/// Fully resolved experiment configuration. Experiments are data: one JSON
/// file drives generate / train / evaluate / rollout, all stages writing into
/// the same output directory. Unknown keys are rejected with their path.
struct ExperimentConfig {
    std::string problem; // burgers | darcy1d | particles | external

    struct Dataset {
        std::string path;         // dataset directory; "" = <output>/dataset
        std::int64_t n_samples = 0;
        std::int64_t n_train = 0;
        std::int64_t n_test = 0;
        std::uint64_t seed = 1;
        double grf_length_scale = 0.0; // 0 = problem default
        double grf_variance = 1.0;
        std::int64_t nx = 0;           // 0 = problem default (101 burgers / 50 darcy)
        std::int64_t nt = 100;
        double nu = 0.01;
        double t_final = 1.0;
        bool normalize = false;
        // particles
        std::int64_t n_trajectories = 0;
        std::int64_t n_particles = 200;
        std::int64_t steps = 300;
        SimConfig sim;
        double connect_radius = 0.045;
    } dataset;

    struct Model {
        std::string preset;
        std::string path;        // model directory; "" = <output>/model
        std::uint64_t seed = 1;
        std::int64_t latent = 32; // GNS latent width
        std::int64_t rounds = 5;  // GNS message-passing rounds
    } model;

    TrainConfig training;
    std::int64_t smooth_window = 100;

    struct Evaluation {
        std::vector<std::string> metrics{"mse", "rel_l2"};
        std::vector<double> noise_levels{0.01, 0.05, 0.10};
        double ood_factor = 10.0;
        std::int64_t n_rollouts = 10;
        std::int64_t rollout_steps = 300;
        double noise_inject_level = 0.0;
        std::uint64_t seed = 1;
    } evaluation;

    std::string output;

    std::filesystem::path dataset_dir() const;
    std::filesystem::path model_dir() const;

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::filesystem::path& path);

    /// Applies KANBENCH_SEED (when set) and CLI overrides.
    void override_seed(std::uint64_t seed);
};

/// Comparison job: a list of completed run directories.
struct CompareConfig {
    std::vector<std::string> runs;
    std::string output;

    static CompareConfig from_file(const std::filesystem::path& path);
};

void write_resolved_config(const ExperimentConfig& cfg);

// Stage entry points (shared by the CLI and the acceptance suite).
void run_generate(const ExperimentConfig& cfg, std::ostream& out);
void run_train(const ExperimentConfig& cfg, std::ostream& out);
void run_evaluate(const ExperimentConfig& cfg, std::ostream& out);
void run_rollout(const ExperimentConfig& cfg, std::ostream& out);
void run_compare(const CompareConfig& cfg, std::ostream& out);

/// Deterministic float formatting used by every CSV writer (%.17g).
std::string format_double(double v);

} // namespace kanbench
