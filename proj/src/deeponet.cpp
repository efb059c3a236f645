#include "kanbench/deeponet.hpp"

#include <algorithm>

#include "kanbench/dataset_io.hpp"
#include "kanbench/rng.hpp"
#include "kanbench/tensor_ops.hpp"

namespace kanbench {

std::int64_t DeepOnetModel::sensor_count() const {
    std::int64_t m = 0;
    for (const auto& br : branches) m += br.spec.input_width();
    return m;
}

void DeepOnetModel::validate() const {
    if (branches.empty()) throw ConfigError("DeepOnetModel: needs at least one branch");
    for (const auto& br : branches)
        if (br.spec.output_width() != latent)
            throw ShapeError("DeepOnetModel: branch output width " +
                             std::to_string(br.spec.output_width()) +
                             " does not match latent " + std::to_string(latent));
    if (trunk.spec.output_width() != latent)
        throw ShapeError("DeepOnetModel: trunk output width " +
                         std::to_string(trunk.spec.output_width()) +
                         " does not match latent " + std::to_string(latent));
}

Tensor deeponet_forward(const DeepOnetModel& model, const Tensor& u_sensors,
                        const Tensor& queries) {
    const bool single = u_sensors.rank() == 1;
    Tensor u = single ? u_sensors.reshaped(Shape{1, u_sensors.dim(0)}) : u_sensors;
    if (u.rank() != 2 || u.dim(1) != model.sensor_count())
        throw ShapeError("deeponet_forward: sensor input " + shape_str(u_sensors.shape()) +
                         " does not match model sensor count " +
                         std::to_string(model.sensor_count()));
    if (queries.rank() != 2 || queries.dim(1) != model.coord_dim())
        throw ShapeError("deeponet_forward: queries " + shape_str(queries.shape()) +
                         " do not match coordinate dim " + std::to_string(model.coord_dim()));

    Tensor branch_sum;
    std::int64_t offset = 0;
    for (std::size_t i = 0; i < model.branches.size(); ++i) {
        const auto width = model.branches[i].spec.input_width();
        Tensor part = model.branches.size() == 1 ? u : slice_cols(u, offset, width);
        Tensor out = network_forward(model.branches[i], part);
        branch_sum = i == 0 ? out : add(branch_sum, out);
        offset += width;
    }
    Tensor trunk_out = network_forward(model.trunk, queries); // [q, p]
    Tensor pred = linear(branch_sum, trunk_out);              // [B, q]
    return single ? reshape(pred, Shape{queries.dim(0)}) : pred;
}

Tensor operator_mse_loss(const DeepOnetModel& model, const Tensor& u_batch,
                         const Tensor& queries, const Tensor& targets) {
    if (u_batch.rank() != 2 || u_batch.dim(0) < 1)
        throw ConfigError("operator_mse_loss: empty batch");
    Tensor pred = deeponet_forward(model, u_batch, queries);
    if (pred.shape() != targets.shape())
        throw ShapeError("operator_mse_loss: targets " + shape_str(targets.shape()) +
                         " vs predictions " + shape_str(pred.shape()));
    return mse(pred, targets);
}

namespace {

struct PresetDef {
    std::vector<std::int64_t> branch_widths;
    std::vector<std::int64_t> trunk_widths;
    LayerKind kind;
    std::int64_t branch_grid = 5;
    std::int64_t trunk_grid = 5;
};

// Widths follow the study configurations: shallow MLPs use hidden width 1000,
// shallow KANs hidden width 2n+1 with an enlarged trunk grid, deep variants
// use the cited layer counts. Latent width p = 100 everywhere.
const std::vector<std::pair<std::string, PresetDef>>& preset_table() {
    static const std::vector<std::pair<std::string, PresetDef>> table = {
        {"burgers-shallow-mlp", {{101, 1000, 100}, {2, 1000, 100}, LayerKind::mlp}},
        {"burgers-shallow-kan", {{101, 203, 100}, {2, 5, 100}, LayerKind::kan, 5, 20}},
        {"burgers-deep-mlp",
         {{101, 128, 128, 128, 128, 128, 128, 100}, {2, 128, 128, 128, 128, 128, 128, 100},
          LayerKind::mlp}},
        {"burgers-deep-kan",
         {{101, 100, 100, 100, 100}, {2, 100, 100, 100, 100}, LayerKind::kan, 5, 5}},
        {"darcy1d-shallow-mlp", {{50, 1000, 100}, {1, 1000, 100}, LayerKind::mlp}},
        {"darcy1d-shallow-kan", {{50, 101, 100}, {1, 3, 100}, LayerKind::kan, 5, 20}},
        {"darcy1d-deep-mlp",
         {{50, 256, 256, 256, 100}, {1, 256, 256, 256, 100}, LayerKind::mlp}},
        {"darcy1d-deep-kan",
         {{50, 100, 100, 100, 100}, {1, 100, 100, 100, 100}, LayerKind::kan, 5, 5}},
    };
    return table;
}

NetworkSpec make_spec(LayerKind kind, std::vector<std::int64_t> widths, std::int64_t grid_size) {
    NetworkSpec spec;
    spec.kind = kind;
    spec.widths = std::move(widths);
    spec.grid = KanGrid{-1.0, 1.0, grid_size, 3};
    return spec;
}

} // namespace

DeepOnetModel build_deeponet(const std::string& preset, std::uint64_t seed) {
    for (const auto& [name, def] : preset_table()) {
        if (name != preset) continue;
        std::vector<NetworkSpec> branch_specs{make_spec(def.kind, def.branch_widths, def.branch_grid)};
        return build_deeponet_custom(branch_specs, make_spec(def.kind, def.trunk_widths, def.trunk_grid),
                                     seed);
    }
    std::string names;
    for (const auto& [name, def] : preset_table()) names += (names.empty() ? "" : ", ") + name;
    throw ConfigError("unknown DeepONet preset '" + preset + "'; valid presets: " + names);
}

DeepOnetModel build_deeponet_custom(const std::vector<NetworkSpec>& branch_specs,
                                    const NetworkSpec& trunk_spec, std::uint64_t seed) {
    DeepOnetModel model;
    for (std::size_t i = 0; i < branch_specs.size(); ++i)
        model.branches.push_back(init_network(branch_specs[i], mix_seed(seed, 100 + i)));
    model.trunk = init_network(trunk_spec, mix_seed(seed, 200));
    model.latent = trunk_spec.output_width();
    model.validate();
    return model;
}

std::vector<std::string> deeponet_preset_names() {
    std::vector<std::string> names;
    for (const auto& [name, def] : preset_table()) names.push_back(name);
    return names;
}

std::int64_t param_count(const DeepOnetModel& model) {
    std::int64_t n = 0;
    for (const auto& br : model.branches) n += param_count(br);
    return n + param_count(model.trunk);
}

void visit_params(DeepOnetModel& model, const ParamVisitor& visit) {
    for (std::size_t i = 0; i < model.branches.size(); ++i)
        visit_params(model.branches[i], "branch" + std::to_string(i), visit);
    visit_params(model.trunk, "trunk", visit);
}

namespace {

nlohmann::json spec_to_json(const NetworkSpec& spec) {
    nlohmann::json j;
    j["kind"] = spec.kind == LayerKind::mlp ? "mlp" : "kan";
    j["widths"] = spec.widths;
    if (spec.kind == LayerKind::kan)
        j["grid"] = {{"lo", spec.grid.lo},
                     {"hi", spec.grid.hi},
                     {"intervals", spec.grid.intervals},
                     {"degree", spec.grid.degree}};
    return j;
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
    NetworkSpec spec;
    spec.kind = j.at("kind").get<std::string>() == "mlp" ? LayerKind::mlp : LayerKind::kan;
    spec.widths = j.at("widths").get<std::vector<std::int64_t>>();
    if (spec.kind == LayerKind::kan) {
        const auto& g = j.at("grid");
        spec.grid = KanGrid{g.at("lo").get<double>(), g.at("hi").get<double>(),
                            g.at("intervals").get<std::int64_t>(),
                            g.at("degree").get<std::int64_t>()};
    }
    return spec;
}

} // namespace

void save_deeponet(const DeepOnetModel& model, const std::filesystem::path& dir,
                   const std::string& preset) {
    ArrayStore store;
    nlohmann::json meta;
    meta["model"] = "deeponet";
    meta["latent"] = model.latent;
    if (!preset.empty()) meta["preset"] = preset;
    meta["branches"] = nlohmann::json::array();
    for (const auto& br : model.branches) meta["branches"].push_back(spec_to_json(br.spec));
    meta["trunk"] = spec_to_json(model.trunk.spec);

    auto& mut = const_cast<DeepOnetModel&>(model);
    visit_params(mut, [&](const std::string& name, Tensor& value) { store.put(name, value); });
    store.metadata = meta;
    store.save(dir);
}

DeepOnetModel load_deeponet(const std::filesystem::path& dir) {
    ArrayStore store = ArrayStore::load(dir);
    const auto& meta = store.metadata;
    if (meta.value("model", "") != std::string("deeponet"))
        throw IoError("load_deeponet: " + dir.string() + " does not hold a DeepONet model");

    std::vector<NetworkSpec> branch_specs;
    for (const auto& j : meta.at("branches")) branch_specs.push_back(spec_from_json(j));
    DeepOnetModel model = build_deeponet_custom(branch_specs, spec_from_json(meta.at("trunk")), 0);
    visit_params(model, [&](const std::string& name, Tensor& value) {
        Tensor loaded = store.tensor(name);
        if (loaded.shape() != value.shape())
            throw IoError("load_deeponet: shape mismatch for " + name);
        loaded.set_requires_grad(true);
        value = loaded;
    });
    return model;
}

} // namespace kanbench
