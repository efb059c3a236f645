#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kanbench/bspline.hpp"
#include "kanbench/tensor.hpp"

namespace kanbench {

enum class LayerKind { mlp, kan };

struct MlpLayerParams {
    Tensor W;               // [out, in]
    Tensor b;               // [out]
    bool apply_activation = true;
};

/// One KAN layer. w_b and w_s of the edge activation are absorbed into
/// base_W and spline_C; nodes sum their incoming edges and carry no bias.
struct KanLayerParams {
    Tensor base_W;          // [out, in]
    Tensor spline_C;        // [out, in, G + k]
    KanGrid grid;
};

struct NetworkSpec {
    LayerKind kind = LayerKind::mlp;
    std::vector<std::int64_t> widths; // [n0, ..., nL]
    KanGrid grid;                     // used by KAN networks only

    std::int64_t input_width() const { return widths.front(); }
    std::int64_t output_width() const { return widths.back(); }
    void validate() const;
};

struct Network {
    NetworkSpec spec;
    std::vector<MlpLayerParams> mlp_layers;
    std::vector<KanLayerParams> kan_layers;
};

/// y[b,o] = sum_i base_W[o,i] silu(x[b,i]) + sum_ij spline_C[o,i,j] B_j(x[b,i])
Tensor kan_layer_forward(const KanLayerParams& p, const Tensor& x);

/// Affine layer plus optional SiLU.
Tensor mlp_layer_forward(const MlpLayerParams& p, const Tensor& x);

/// Full stack; regression convention: no activation after the last layer.
Tensor network_forward(const Network& net, const Tensor& x);

/// Deterministic initialisation. MLP: W ~ U(+-sqrt(6/(in+out))), b = 0.
/// KAN: base_W same rule, spline_C ~ N(0, (0.1/sqrt(in))^2).
Network init_network(const NetworkSpec& spec, std::uint64_t seed);

/// Hidden width 2n+1 of the shallow KAN presets.
std::int64_t shallow_width(std::int64_t input_dim);

std::int64_t param_count(const Network& net);

using ParamVisitor = std::function<void(const std::string& name, Tensor& value)>;
void visit_params(Network& net, const std::string& prefix, const ParamVisitor& visit);

} // namespace kanbench
