#include "kanbench/layers.hpp"

#include <cmath>

#include "kanbench/rng.hpp"
#include "kanbench/tensor_ops.hpp"

namespace kanbench {

void NetworkSpec::validate() const {
    if (widths.size() < 2)
        throw ConfigError("NetworkSpec: need at least input and output widths");
    for (auto w : widths)
        if (w < 1) throw ConfigError("NetworkSpec: widths must be >= 1");
    if (kind == LayerKind::kan) grid.validate();
}

Tensor kan_layer_forward(const KanLayerParams& p, const Tensor& x) {
    const auto in = p.base_W.dim(1);
    const auto out_w = p.base_W.dim(0);
    if (x.rank() != 2 || x.dim(1) != in)
        throw ShapeError("kan_layer_forward: input " + shape_str(x.shape()) +
                         " does not match layer [" + std::to_string(out_w) + "," +
                         std::to_string(in) + "]");
    const auto nb = p.grid.basis_count();
    Tensor bases = bspline_bases(x, p.grid);
    Tensor bases_flat = reshape(bases, Shape{x.dim(0), in * nb});
    Tensor coeff_flat = p.spline_C.reshaped(Shape{out_w, in * nb});
    return add(linear(silu(x), p.base_W), linear(bases_flat, coeff_flat));
}

Tensor mlp_layer_forward(const MlpLayerParams& p, const Tensor& x) {
    Tensor y = add_bias(linear(x, p.W), p.b);
    return p.apply_activation ? silu(y) : y;
}

Tensor network_forward(const Network& net, const Tensor& x) {
    Tensor h = x;
    if (net.spec.kind == LayerKind::mlp) {
        for (const auto& layer : net.mlp_layers) h = mlp_layer_forward(layer, h);
    } else {
        for (const auto& layer : net.kan_layers) h = kan_layer_forward(layer, h);
    }
    return h;
}

Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Network net;
    net.spec = spec;
    const auto layers = spec.widths.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const auto in = spec.widths[l];
        const auto out_w = spec.widths[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out_w));
        const auto w_seed = mix_seed(seed, 2 * l);
        if (spec.kind == LayerKind::mlp) {
            MlpLayerParams p;
            p.W = Tensor::uniform(Shape{out_w, in}, w_seed, -limit, limit);
            p.b = Tensor(Shape{out_w}, 0.0);
            p.W.set_requires_grad(true);
            p.b.set_requires_grad(true);
            p.apply_activation = l + 1 < layers;
            net.mlp_layers.push_back(std::move(p));
        } else {
            KanLayerParams p;
            p.grid = spec.grid;
            p.base_W = Tensor::uniform(Shape{out_w, in}, w_seed, -limit, limit);
            const double spline_std = 0.1 / std::sqrt(static_cast<double>(in));
            p.spline_C = Tensor::randn(Shape{out_w, in, spec.grid.basis_count()},
                                       mix_seed(seed, 2 * l + 1), spline_std);
            p.base_W.set_requires_grad(true);
            p.spline_C.set_requires_grad(true);
            net.kan_layers.push_back(std::move(p));
        }
    }
    return net;
}

std::int64_t shallow_width(std::int64_t input_dim) {
    if (input_dim < 1)
        throw ConfigError("shallow_width: input dimension must be >= 1, got " +
                          std::to_string(input_dim));
    return 2 * input_dim + 1;
}

std::int64_t param_count(const Network& net) {
    std::int64_t n = 0;
    for (const auto& p : net.mlp_layers) n += p.W.numel() + p.b.numel();
    for (const auto& p : net.kan_layers) n += p.base_W.numel() + p.spline_C.numel();
    return n;
}

void visit_params(Network& net, const std::string& prefix, const ParamVisitor& visit) {
    for (std::size_t l = 0; l < net.mlp_layers.size(); ++l) {
        visit(prefix + ".l" + std::to_string(l) + ".W", net.mlp_layers[l].W);
        visit(prefix + ".l" + std::to_string(l) + ".b", net.mlp_layers[l].b);
    }
    for (std::size_t l = 0; l < net.kan_layers.size(); ++l) {
        visit(prefix + ".l" + std::to_string(l) + ".base_W", net.kan_layers[l].base_W);
        visit(prefix + ".l" + std::to_string(l) + ".spline_C", net.kan_layers[l].spline_C);
    }
}

} // namespace kanbench
