#include "kanbench/graph_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "kanbench/dataset_io.hpp"
#include "kanbench/kernels.hpp"
#include "kanbench/rng.hpp"

namespace kanbench {

GraphEdges build_graph(std::span<const double> positions, std::int64_t n, double radius) {
    if (radius <= 0.0) throw ConfigError("build_graph: radius must be > 0");
    auto pairs = contact_pairs_grid(positions, n, radius);
    GraphEdges edges;
    edges.senders.reserve(pairs.size() * 2);
    edges.receivers.reserve(pairs.size() * 2);
    // Two directed edges per pair, sorted by (receiver, sender).
    std::vector<std::pair<std::int32_t, std::int32_t>> directed; // (receiver, sender)
    directed.reserve(pairs.size() * 2);
    for (auto [i, j] : pairs) {
        directed.emplace_back(i, j);
        directed.emplace_back(j, i);
    }
    std::sort(directed.begin(), directed.end());
    for (auto [r, s] : directed) {
        edges.receivers.push_back(r);
        edges.senders.push_back(s);
    }
    return edges;
}

GraphEdges build_graph_brute(std::span<const double> positions, std::int64_t n, double radius) {
    if (radius <= 0.0) throw ConfigError("build_graph_brute: radius must be > 0");
    GraphEdges edges;
    for (std::int32_t i = 0; i < n; ++i)
        for (std::int32_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dx = positions[static_cast<std::size_t>(2 * i)] -
                              positions[static_cast<std::size_t>(2 * j)];
            const double dy = positions[static_cast<std::size_t>(2 * i + 1)] -
                              positions[static_cast<std::size_t>(2 * j + 1)];
            if (dx * dx + dy * dy < radius * radius) {
                edges.receivers.push_back(i);
                edges.senders.push_back(j);
            }
        }
    return edges;
}

VelAccStats compute_feature_stats(const TrajectoryDataset& ds, const FeaturizeConfig& cfg) {
    VelAccStats st;
    const double dt = cfg.frame_dt;
    double v_sum[2] = {0, 0}, v_sq[2] = {0, 0}, a_sum[2] = {0, 0}, a_sq[2] = {0, 0};
    std::int64_t nv = 0, na = 0;
    const auto& idx = ds.train_idx.empty() ? ds.test_idx : ds.train_idx;
    for (auto ti : idx) {
        const auto& tr = ds.trajectories[static_cast<std::size_t>(ti)];
        const auto t_count = tr.frames();
        const auto n = tr.particles();
        const auto* p = tr.positions.data();
        for (std::int64_t t = 1; t < t_count; ++t)
            for (std::int64_t i = 0; i < n; ++i)
                for (int c = 0; c < 2; ++c) {
                    const double v = (p[(t * n + i) * 2 + c] - p[((t - 1) * n + i) * 2 + c]) / dt;
                    v_sum[c] += v;
                    v_sq[c] += v * v;
                    if (c == 0) ++nv;
                }
        for (std::int64_t t = 1; t + 1 < t_count; ++t)
            for (std::int64_t i = 0; i < n; ++i)
                for (int c = 0; c < 2; ++c) {
                    const double a = (p[((t + 1) * n + i) * 2 + c] - 2.0 * p[(t * n + i) * 2 + c] +
                                      p[((t - 1) * n + i) * 2 + c]) / (dt * dt);
                    a_sum[c] += a;
                    a_sq[c] += a * a;
                    if (c == 0) ++na;
                }
    }
    if (nv == 0 || na == 0) throw ConfigError("compute_feature_stats: dataset too short");
    for (int c = 0; c < 2; ++c) {
        st.vel_mean[c] = v_sum[c] / static_cast<double>(nv);
        st.vel_std[c] = std::sqrt(std::max(0.0, v_sq[c] / static_cast<double>(nv) -
                                                    st.vel_mean[c] * st.vel_mean[c]));
        st.acc_mean[c] = a_sum[c] / static_cast<double>(na);
        st.acc_std[c] = std::sqrt(std::max(0.0, a_sq[c] / static_cast<double>(na) -
                                                    st.acc_mean[c] * st.acc_mean[c]));
        // A constant-velocity or constant-acceleration dataset cannot be
        // standardized; normalizing by a vanishing std would blow up targets.
        if (st.vel_std[c] <= 1e-9 * (1.0 + std::abs(st.vel_mean[c])) ||
            st.acc_std[c] <= 1e-9 * (1.0 + std::abs(st.acc_mean[c])))
            throw ConfigError("compute_feature_stats: degenerate velocity/acceleration "
                              "distribution; trajectories need contact dynamics");
    }
    return st;
}

GraphSample featurize(std::span<const double> frames, std::int64_t w, std::int64_t n,
                      const FeaturizeConfig& cfg, const VelAccStats& stats) {
    const auto h = cfg.history;
    if (w != h + 1 && w != h + 2)
        throw ConfigError("featurize: window must have " + std::to_string(h + 1) +
                          " frames (or one more for the target), got " + std::to_string(w));
    if (static_cast<std::int64_t>(frames.size()) != w * n * 2)
        throw ShapeError("featurize: frame buffer does not match [W, N, 2]");

    const double dt = cfg.frame_dt;
    const double radius = cfg.connect_radius;
    const std::int64_t cur = h; // last input frame
    const auto fw = cfg.node_feature_width();

    GraphSample sample;
    sample.node_features = Tensor(Shape{n, fw});
    auto* nf = sample.node_features.mutable_values().data();
    const double* f = frames.data();
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t k = 0; k < h; ++k)
            for (int c = 0; c < 2; ++c) {
                const double v = (f[((k + 1) * n + i) * 2 + c] - f[(k * n + i) * 2 + c]) / dt;
                nf[i * fw + 2 * k + c] =
                    (v - stats.vel_mean[static_cast<std::size_t>(c)]) /
                    stats.vel_std[static_cast<std::size_t>(c)];
            }
        const double x = f[(cur * n + i) * 2];
        const double y = f[(cur * n + i) * 2 + 1];
        nf[i * fw + 2 * h + 0] = std::clamp(x / radius, 0.0, 1.0);
        nf[i * fw + 2 * h + 1] = std::clamp((1.0 - x) / radius, 0.0, 1.0);
        nf[i * fw + 2 * h + 2] = std::clamp(y / radius, 0.0, 1.0);
        nf[i * fw + 2 * h + 3] = std::clamp((1.0 - y) / radius, 0.0, 1.0);
    }

    sample.edges = build_graph(
        std::span<const double>(f + cur * n * 2, static_cast<std::size_t>(n * 2)), n, radius);
    const auto e = sample.edges.count();
    if (e > 0) {
        sample.edge_features = Tensor(Shape{e, FeaturizeConfig::kEdgeFeatureWidth});
        auto* ef = sample.edge_features.mutable_values().data();
        for (std::int64_t k = 0; k < e; ++k) {
            const auto snd = sample.edges.senders[static_cast<std::size_t>(k)];
            const auto rcv = sample.edges.receivers[static_cast<std::size_t>(k)];
            const double dx = f[(cur * n + snd) * 2] - f[(cur * n + rcv) * 2];
            const double dy = f[(cur * n + snd) * 2 + 1] - f[(cur * n + rcv) * 2 + 1];
            ef[k * 3 + 0] = dx / radius;
            ef[k * 3 + 1] = dy / radius;
            ef[k * 3 + 2] = std::sqrt(dx * dx + dy * dy) / radius;
        }
    }

    if (w == h + 2) {
        sample.target_acc = Tensor(Shape{n, 2});
        auto* ta = sample.target_acc.mutable_values().data();
        for (std::int64_t i = 0; i < n; ++i)
            for (int c = 0; c < 2; ++c) {
                const double a = (f[((cur + 1) * n + i) * 2 + c] - 2.0 * f[(cur * n + i) * 2 + c] +
                                  f[((cur - 1) * n + i) * 2 + c]) / (dt * dt);
                ta[i * 2 + c] = (a - stats.acc_mean[static_cast<std::size_t>(c)]) /
                                stats.acc_std[static_cast<std::size_t>(c)];
            }
    }
    return sample;
}

namespace {

NetworkSpec gns_net_spec(const std::string& preset, std::int64_t in, std::int64_t out) {
    NetworkSpec spec;
    if (preset == "kan-64") {
        spec.kind = LayerKind::kan;
        spec.widths = {in, 64, out};
        spec.grid = KanGrid{-1.0, 1.0, 5, 3};
    } else if (preset == "mlp-128") {
        spec.kind = LayerKind::mlp;
        spec.widths = {in, 128, out};
    } else if (preset == "mlp-256") {
        spec.kind = LayerKind::mlp;
        spec.widths = {in, 256, out};
    } else if (preset == "mlp-128-128") {
        spec.kind = LayerKind::mlp;
        spec.widths = {in, 128, 128, out};
    } else {
        throw ConfigError("unknown GNS preset '" + preset +
                          "'; valid presets: kan-64, mlp-128, mlp-256, mlp-128-128");
    }
    return spec;
}

} // namespace

GnsModel build_gns(const std::string& preset, std::int64_t latent, std::int64_t rounds,
                   const FeaturizeConfig& feat, const VelAccStats& stats, std::uint64_t seed) {
    if (latent < 1 || rounds < 1) throw ConfigError("build_gns: latent and rounds must be >= 1");
    GnsModel model;
    model.preset = preset;
    model.latent = latent;
    model.feat = feat;
    model.stats = stats;
    model.node_encoder = init_network(gns_net_spec(preset, feat.node_feature_width(), latent),
                                      mix_seed(seed, 1));
    model.edge_encoder = init_network(
        gns_net_spec(preset, FeaturizeConfig::kEdgeFeatureWidth, latent), mix_seed(seed, 2));
    model.decoder = init_network(gns_net_spec(preset, latent, 2), mix_seed(seed, 3));
    for (std::int64_t l = 0; l < rounds; ++l) {
        model.message_nets.push_back(init_network(gns_net_spec(preset, 3 * latent, latent),
                                                  mix_seed(seed, 10 + 2 * l)));
        model.update_nets.push_back(init_network(gns_net_spec(preset, 2 * latent, latent),
                                                 mix_seed(seed, 11 + 2 * l)));
    }
    return model;
}

std::vector<std::string> gns_preset_names() {
    return {"kan-64", "mlp-128", "mlp-256", "mlp-128-128"};
}

Tensor gns_forward(const GnsModel& model, const GraphSample& sample) {
    const auto n = sample.n_nodes();
    Tensor v = network_forward(model.node_encoder, sample.node_features);
    const auto e = sample.edges.count();

    Tensor edge_latent;
    RowGroups by_sender, by_receiver;
    if (e > 0) {
        edge_latent = network_forward(model.edge_encoder, sample.edge_features);
        by_sender = RowGroups::build(sample.edges.senders, n);
        by_receiver = RowGroups::build(sample.edges.receivers, n);
    }

    for (std::size_t l = 0; l < model.message_nets.size(); ++l) {
        Tensor agg;
        if (e > 0) {
            Tensor vj = gather_rows(v, sample.edges.senders, by_sender);
            Tensor vi = gather_rows(v, sample.edges.receivers, by_receiver);
            Tensor msg = network_forward(model.message_nets[l], concat_cols({vj, vi, edge_latent}));
            agg = segment_sum(msg, sample.edges.receivers, by_receiver);
            edge_latent = msg;
        } else {
            agg = Tensor(Shape{n, model.latent}, 0.0);
        }
        v = add(v, network_forward(model.update_nets[l], concat_cols({v, agg})));
    }
    return network_forward(model.decoder, v);
}

std::int64_t param_count(const GnsModel& model) {
    std::int64_t total = param_count(model.node_encoder) + param_count(model.edge_encoder) +
                         param_count(model.decoder);
    for (const auto& net : model.message_nets) total += param_count(net);
    for (const auto& net : model.update_nets) total += param_count(net);
    return total;
}

void visit_params(GnsModel& model, const ParamVisitor& visit) {
    visit_params(model.node_encoder, "node_encoder", visit);
    visit_params(model.edge_encoder, "edge_encoder", visit);
    for (std::size_t l = 0; l < model.message_nets.size(); ++l) {
        visit_params(model.message_nets[l], "message" + std::to_string(l), visit);
        visit_params(model.update_nets[l], "update" + std::to_string(l), visit);
    }
    visit_params(model.decoder, "decoder", visit);
}

RolloutResult rollout_with(const AccPredictor& predict, const FeaturizeConfig& feat,
                           const VelAccStats& stats, std::span<const double> seed_frames,
                           std::int64_t n, std::int64_t n_steps, const Trajectory* ground_truth) {
    const auto h = feat.history;
    const auto w0 = h + 1;
    if (static_cast<std::int64_t>(seed_frames.size()) != w0 * n * 2)
        throw ShapeError("rollout: seed frames must be [" + std::to_string(w0) + ", N, 2]");

    RolloutResult result;
    result.positions = Tensor(Shape{w0 + n_steps, n, 2});
    auto* out = result.positions.mutable_values().data();
    std::memcpy(out, seed_frames.data(), seed_frames.size() * sizeof(double));

    const double dt = feat.frame_dt;
    std::vector<double> window(static_cast<std::size_t>(w0 * n * 2));
    TapePause pause;
    for (std::int64_t step = 0; step < n_steps; ++step) {
        const std::int64_t t_cur = w0 - 1 + step;
        std::memcpy(window.data(), out + (t_cur - h) * n * 2,
                    static_cast<std::size_t>(w0 * n * 2) * sizeof(double));
        GraphSample sample = featurize(window, w0, n, feat, stats);
        Tensor acc = predict(step, sample);
        if (acc.rank() != 2 || acc.dim(0) != n || acc.dim(1) != 2)
            throw ShapeError("rollout: predictor must return [N, 2]");
        if (!kernels::all_finite(acc.data(), acc.numel()))
            throw NumericError("rollout: non-finite prediction at step " + std::to_string(step));
        const auto* a = acc.data();
        for (std::int64_t i = 0; i < n; ++i)
            for (int c = 0; c < 2; ++c) {
                const double phys = stats.acc_mean[static_cast<std::size_t>(c)] +
                                    stats.acc_std[static_cast<std::size_t>(c)] * a[i * 2 + c];
                const double p_cur = out[(t_cur * n + i) * 2 + c];
                const double p_prev = out[((t_cur - 1) * n + i) * 2 + c];
                double p_next = 2.0 * p_cur - p_prev + phys * dt * dt;
                p_next = std::clamp(p_next, 0.0, 1.0);
                out[((t_cur + 1) * n + i) * 2 + c] = p_next;
            }
        if (ground_truth) {
            const auto* tp = ground_truth->positions.data();
            const std::int64_t t_next = t_cur + 1;
            if (t_next < ground_truth->frames()) {
                double se = 0.0;
                for (std::int64_t i = 0; i < n * 2; ++i) {
                    const double d = out[t_next * n * 2 + i] - tp[t_next * n * 2 + i];
                    se += d * d;
                }
                result.per_step_mse.push_back(se / static_cast<double>(n * 2));
            }
        }
    }
    return result;
}

RolloutResult rollout(const GnsModel& model, std::span<const double> seed_frames, std::int64_t n,
                      std::int64_t n_steps, const Trajectory* ground_truth) {
    return rollout_with(
        [&](std::int64_t, const GraphSample& sample) { return gns_forward(model, sample); },
        model.feat, model.stats, seed_frames, n, n_steps, ground_truth);
}

std::vector<double> inject_input_noise(std::span<const double> frames, std::int64_t w,
                                       std::int64_t n, double level, std::uint64_t seed,
                                       double frame_dt) {
    if (level < 0.0) throw ConfigError("inject_input_noise: negative level");
    std::vector<double> out(frames.begin(), frames.end());
    if (level == 0.0) return out;
    if (w < 2) throw ConfigError("inject_input_noise: need at least two frames");

    double speed_sum = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double vx = (frames[static_cast<std::size_t>((n + i) * 2)] -
                           frames[static_cast<std::size_t>(i * 2)]) / frame_dt;
        const double vy = (frames[static_cast<std::size_t>((n + i) * 2 + 1)] -
                           frames[static_cast<std::size_t>(i * 2 + 1)]) / frame_dt;
        speed_sum += std::sqrt(vx * vx + vy * vy);
    }
    const double mean_speed = speed_sum / static_cast<double>(n);
    const double noise_std = std::sqrt(level * mean_speed);
    SeededRng rng(seed);
    for (auto& x : out) x += noise_std * rng.next_normal();
    return out;
}

namespace {

void save_network(ArrayStore& store, const std::string& prefix, const Network& net,
                  nlohmann::json& meta) {
    meta["kind"] = net.spec.kind == LayerKind::mlp ? "mlp" : "kan";
    meta["widths"] = net.spec.widths;
    if (net.spec.kind == LayerKind::kan) {
        meta["grid"] = {{"lo", net.spec.grid.lo},
                        {"hi", net.spec.grid.hi},
                        {"intervals", net.spec.grid.intervals},
                        {"degree", net.spec.grid.degree}};
    }
    Network& mut = const_cast<Network&>(net);
    visit_params(mut, prefix, [&](const std::string& name, Tensor& value) {
        store.put(name, value);
    });
}

Network load_network(const ArrayStore& store, const std::string& prefix,
                     const nlohmann::json& meta) {
    NetworkSpec spec;
    spec.kind = meta.at("kind").get<std::string>() == "mlp" ? LayerKind::mlp : LayerKind::kan;
    spec.widths = meta.at("widths").get<std::vector<std::int64_t>>();
    if (spec.kind == LayerKind::kan) {
        const auto& g = meta.at("grid");
        spec.grid = KanGrid{g.at("lo").get<double>(), g.at("hi").get<double>(),
                            g.at("intervals").get<std::int64_t>(), g.at("degree").get<std::int64_t>()};
    }
    Network net = init_network(spec, 0);
    visit_params(net, prefix, [&](const std::string& name, Tensor& value) {
        Tensor loaded = store.tensor(name);
        if (loaded.shape() != value.shape())
            throw IoError("load_network: shape mismatch for " + name);
        loaded.set_requires_grad(true);
        value = loaded;
    });
    return net;
}

nlohmann::json stats_to_json(const VelAccStats& st) {
    return {{"vel_mean", st.vel_mean}, {"vel_std", st.vel_std},
            {"acc_mean", st.acc_mean}, {"acc_std", st.acc_std}};
}

VelAccStats stats_from_json(const nlohmann::json& j) {
    VelAccStats st;
    st.vel_mean = j.at("vel_mean").get<std::array<double, 2>>();
    st.vel_std = j.at("vel_std").get<std::array<double, 2>>();
    st.acc_mean = j.at("acc_mean").get<std::array<double, 2>>();
    st.acc_std = j.at("acc_std").get<std::array<double, 2>>();
    return st;
}

} // namespace

void save_gns(const GnsModel& model, const std::filesystem::path& dir) {
    ArrayStore store;
    nlohmann::json meta;
    meta["model"] = "gns";
    meta["preset"] = model.preset;
    meta["latent"] = model.latent;
    meta["rounds"] = model.rounds();
    meta["feat"] = {{"connect_radius", model.feat.connect_radius},
                    {"frame_dt", model.feat.frame_dt},
                    {"history", model.feat.history}};
    meta["stats"] = stats_to_json(model.stats);

    save_network(store, "node_encoder", model.node_encoder, meta["nets"]["node_encoder"]);
    save_network(store, "edge_encoder", model.edge_encoder, meta["nets"]["edge_encoder"]);
    save_network(store, "decoder", model.decoder, meta["nets"]["decoder"]);
    for (std::int64_t l = 0; l < model.rounds(); ++l) {
        save_network(store, "message" + std::to_string(l), model.message_nets[static_cast<std::size_t>(l)],
                     meta["nets"]["message" + std::to_string(l)]);
        save_network(store, "update" + std::to_string(l), model.update_nets[static_cast<std::size_t>(l)],
                     meta["nets"]["update" + std::to_string(l)]);
    }
    store.metadata = meta;
    store.save(dir);
}

GnsModel load_gns(const std::filesystem::path& dir) {
    ArrayStore store = ArrayStore::load(dir);
    const auto& meta = store.metadata;
    if (meta.value("model", "") != std::string("gns"))
        throw IoError("load_gns: " + dir.string() + " does not hold a GNS model");
    GnsModel model;
    model.preset = meta.at("preset").get<std::string>();
    model.latent = meta.at("latent").get<std::int64_t>();
    model.feat.connect_radius = meta.at("feat").at("connect_radius").get<double>();
    model.feat.frame_dt = meta.at("feat").at("frame_dt").get<double>();
    model.feat.history = meta.at("feat").at("history").get<std::int64_t>();
    model.stats = stats_from_json(meta.at("stats"));
    const auto rounds = meta.at("rounds").get<std::int64_t>();
    model.node_encoder = load_network(store, "node_encoder", meta.at("nets").at("node_encoder"));
    model.edge_encoder = load_network(store, "edge_encoder", meta.at("nets").at("edge_encoder"));
    model.decoder = load_network(store, "decoder", meta.at("nets").at("decoder"));
    for (std::int64_t l = 0; l < rounds; ++l) {
        model.message_nets.push_back(
            load_network(store, "message" + std::to_string(l), meta.at("nets").at("message" + std::to_string(l))));
        model.update_nets.push_back(
            load_network(store, "update" + std::to_string(l), meta.at("nets").at("update" + std::to_string(l))));
    }
    return model;
}

} // namespace kanbench
