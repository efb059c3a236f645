#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kanbench/layers.hpp"

namespace kanbench {

/// Branch/trunk operator network. Multi-branch models split the sensor
/// vector into one contiguous segment per branch and sum the branch outputs
/// before the latent dot product.
struct DeepOnetModel {
    std::vector<Network> branches;
    Network trunk;
    std::int64_t latent = 100; // p

    std::int64_t sensor_count() const;
    std::int64_t coord_dim() const { return trunk.spec.input_width(); }
    void validate() const;
};

/// Predictions for a batch of input functions on a shared query set.
/// u: [B, m] (or [m] for a single function), queries: [q, d] -> [B, q] ([q]).
Tensor deeponet_forward(const DeepOnetModel& model, const Tensor& u_sensors,
                        const Tensor& queries);

/// Mean over all (sample, query) pairs of squared prediction error.
Tensor operator_mse_loss(const DeepOnetModel& model, const Tensor& u_batch,
                         const Tensor& queries, const Tensor& targets);

/// Named configurations from the comparative study. Seed fixes every weight.
DeepOnetModel build_deeponet(const std::string& preset, std::uint64_t seed);

DeepOnetModel build_deeponet_custom(const std::vector<NetworkSpec>& branch_specs,
                                    const NetworkSpec& trunk_spec, std::uint64_t seed);

std::vector<std::string> deeponet_preset_names();

std::int64_t param_count(const DeepOnetModel& model);
void visit_params(DeepOnetModel& model, const ParamVisitor& visit);

void save_deeponet(const DeepOnetModel& model, const std::filesystem::path& dir,
                   const std::string& preset = "");
DeepOnetModel load_deeponet(const std::filesystem::path& dir);

} // namespace kanbench
