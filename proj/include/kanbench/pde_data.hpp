#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kanbench/tensor.hpp"

namespace kanbench {

struct GrfConfig {
    std::int64_t n_points = 0;
    double length_scale = 0.1;
    double variance = 1.0;
};

/// Gaussian random field sampler on fixed points in [0,1]: RBF covariance
/// k(x,x') = variance * exp(-(x-x')^2 / (2 l^2)), factored once with a 1e-10
/// diagonal jitter; each draw is L z with a seeded standard-normal z.
class GrfSampler {
public:
    GrfSampler(GrfConfig cfg, std::vector<double> points);
    std::vector<double> sample(std::uint64_t seed) const;
    const GrfConfig& config() const { return cfg_; }

private:
    GrfConfig cfg_;
    std::vector<double> points_;
    std::vector<double> chol_; // lower triangular, row-major n x n
};

/// One-shot draw on a uniform grid of cfg.n_points over [0,1].
std::vector<double> sample_grf(const GrfConfig& cfg, std::uint64_t seed);

struct BurgersConfig {
    std::int64_t nx = 101; // periodic cells, x_i = i/nx
    std::int64_t nt = 100; // stored output slices after t=0
    double nu = 0.01;
    double t_final = 1.0;
};

/// Conservative finite-difference Burgers solve: Godunov flux for u^2/2,
/// central diffusion, periodic wrap, explicit sub-stepping under a CFL bound.
/// Returns the field on the (nt+1) x nx output slices.
std::vector<double> solve_burgers(std::span<const double> u0, const BurgersConfig& cfg);

struct Darcy1dConfig {
    std::int64_t nx = 50; // interior nodes, x_i = (i+1)/(nx+1)
};

/// Nonlinear 1-D Darcy solve of -d/dx(kappa(u) du/dx) = s with kappa = 0.2 + u^2
/// and zero Dirichlet ends: Picard iteration over tridiagonal solves with
/// harmonic-mean face permeabilities. `s` lives on the interior nodes.
std::vector<double> solve_darcy1d(std::span<const double> s, std::int64_t nx);

/// Residual of the discrete Darcy system for a candidate solution (max norm).
double darcy1d_residual(std::span<const double> s, std::span<const double> u);

struct NormStats {
    double in_mean = 0.0, in_std = 1.0;
    std::vector<double> q_mean, q_std; // per coordinate dimension
    double t_mean = 0.0, t_std = 1.0;
};

struct OperatorSampleView {
    std::span<const double> u_sensors;
    const Tensor& queries;
    std::span<const double> targets;
};

/// Sensor-sampled input functions with a query grid shared across samples.
struct OperatorDataset {
    std::string problem;    // burgers | darcy1d | external
    Tensor sensor_points;   // [m] sensor locations
    Tensor inputs;          // [n, m]
    Tensor queries;         // [q, d]
    Tensor targets;         // [n, q]
    std::vector<std::int64_t> train_idx, test_idx;
    std::optional<NormStats> stats;
    nlohmann::json metadata;

    std::int64_t n_samples() const { return inputs.dim(0); }
    std::int64_t sensor_count() const { return inputs.dim(1); }
    std::int64_t query_count() const { return queries.dim(0); }
    std::int64_t coord_dim() const { return queries.dim(1); }
    OperatorSampleView sample(std::int64_t i) const;
    void validate_split() const;
};

struct OperatorDatasetConfig {
    std::string problem;                 // burgers | darcy1d
    std::int64_t n_samples = 0;
    std::int64_t n_train = 0;
    std::int64_t n_test = 0;
    std::uint64_t seed = 1;
    double grf_length_scale = 0.0;       // 0 = problem default (0.1 burgers, 0.2 darcy)
    double grf_variance = 1.0;
    BurgersConfig burgers;
    Darcy1dConfig darcy;
};

OperatorDataset make_operator_dataset(const OperatorDatasetConfig& cfg);

/// Perturbs each input function with zero-mean Gaussian noise of std
/// level * std(sample values) and re-solves the targets.
OperatorDataset add_noise_resolve(const OperatorDataset& ds, double level, std::uint64_t seed);

/// Scales the inputs and re-solves ("out-of-distribution" construction).
OperatorDataset scale_ood(const OperatorDataset& ds, double factor);

/// Z-scores inputs/coordinates/targets using train-split statistics only.
std::pair<OperatorDataset, NormStats> normalize_dataset(const OperatorDataset& ds);

void save_dataset(const OperatorDataset& ds, const std::filesystem::path& dir);
OperatorDataset load_dataset(const std::filesystem::path& dir);

} // namespace kanbench
