#include "kanbench/experiment.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <set>

#include "kanbench/dataset_io.hpp"
#include "kanbench/rng.hpp"

namespace kanbench {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& path,
                const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError("config: '" + path + "' must be an object");
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            throw ConfigError("config: unknown key '" + (path.empty() ? key : path + "." + key) + "'");
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::trunc);
    if (!f) throw IoError("cannot write " + p.string());
    return f;
}

void write_csv(const std::filesystem::path& p, const std::string& header,
               const std::vector<std::vector<std::string>>& rows) {
    auto f = open_out(p);
    f << header << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
        f << '\n';
    }
}

json load_json_file(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw IoError("missing file: " + p.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed JSON in " + p.string() + ": " + e.what());
    }
    return j;
}

} // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::filesystem::path ExperimentConfig::dataset_dir() const {
    return dataset.path.empty() ? std::filesystem::path(output) / "dataset"
                                : std::filesystem::path(dataset.path);
}

std::filesystem::path ExperimentConfig::model_dir() const {
    return model.path.empty() ? std::filesystem::path(output) / "model"
                              : std::filesystem::path(model.path);
}

json ExperimentConfig::to_json() const {
    json j;
    j["problem"] = problem;
    j["output"] = output;
    j["dataset"] = {{"path", dataset.path},
                    {"n_samples", dataset.n_samples},
                    {"n_train", dataset.n_train},
                    {"n_test", dataset.n_test},
                    {"seed", dataset.seed},
                    {"grf_length_scale", dataset.grf_length_scale},
                    {"grf_variance", dataset.grf_variance},
                    {"nx", dataset.nx},
                    {"nt", dataset.nt},
                    {"nu", dataset.nu},
                    {"t_final", dataset.t_final},
                    {"normalize", dataset.normalize},
                    {"n_trajectories", dataset.n_trajectories},
                    {"n_particles", dataset.n_particles},
                    {"steps", dataset.steps},
                    {"sim", dataset.sim.to_json()},
                    {"connect_radius", dataset.connect_radius}};
    j["model"] = {{"preset", model.preset},
                  {"path", model.path},
                  {"seed", model.seed},
                  {"latent", model.latent},
                  {"rounds", model.rounds}};
    j["training"] = {{"lr", training.lr},
                     {"schedule",
                      {{"kind", training.schedule.kind == LrSchedule::Kind::constant
                                    ? "constant"
                                    : "step_decay"},
                       {"factor", training.schedule.factor},
                       {"interval_frac", training.schedule.interval_frac}}},
                     {"batch", training.batch},
                     {"epochs", training.epochs},
                     {"steps", training.steps},
                     {"seed", training.seed},
                     {"query_sub", training.query_sub},
                     {"input_noise_std", training.input_noise_std},
                     {"test_cadence", training.test_cadence},
                     {"smooth_window", smooth_window},
                     {"adam", {{"beta1", training.adam.beta1},
                               {"beta2", training.adam.beta2},
                               {"eps", training.adam.eps}}}};
    j["evaluation"] = {{"metrics", evaluation.metrics},
                       {"noise_levels", evaluation.noise_levels},
                       {"ood_factor", evaluation.ood_factor},
                       {"n_rollouts", evaluation.n_rollouts},
                       {"rollout_steps", evaluation.rollout_steps},
                       {"noise_inject_level", evaluation.noise_inject_level},
                       {"seed", evaluation.seed}};
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    check_keys(j, "", {"problem", "dataset", "model", "training", "evaluation", "output"});
    ExperimentConfig cfg;
    cfg.problem = get_or<std::string>(j, "problem", "");
    cfg.output = get_or<std::string>(j, "output", "");
    if (cfg.output.empty()) throw ConfigError("config: 'output' is required");

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        check_keys(d, "dataset",
                   {"path", "n_samples", "n_train", "n_test", "seed", "grf_length_scale",
                    "grf_variance", "nx", "nt", "nu", "t_final", "normalize", "n_trajectories",
                    "n_particles", "steps", "sim", "connect_radius"});
        cfg.dataset.path = get_or<std::string>(d, "path", "");
        cfg.dataset.n_samples = get_or<std::int64_t>(d, "n_samples", 0);
        cfg.dataset.n_train = get_or<std::int64_t>(d, "n_train", 0);
        cfg.dataset.n_test = get_or<std::int64_t>(d, "n_test", 0);
        cfg.dataset.seed = get_or<std::uint64_t>(d, "seed", 1);
        cfg.dataset.grf_length_scale = get_or<double>(d, "grf_length_scale", 0.0);
        cfg.dataset.grf_variance = get_or<double>(d, "grf_variance", 1.0);
        cfg.dataset.nx = get_or<std::int64_t>(d, "nx", 0);
        cfg.dataset.nt = get_or<std::int64_t>(d, "nt", 100);
        cfg.dataset.nu = get_or<double>(d, "nu", 0.01);
        cfg.dataset.t_final = get_or<double>(d, "t_final", 1.0);
        cfg.dataset.normalize = get_or<bool>(d, "normalize", false);
        cfg.dataset.n_trajectories = get_or<std::int64_t>(d, "n_trajectories", 0);
        cfg.dataset.n_particles = get_or<std::int64_t>(d, "n_particles", 200);
        cfg.dataset.steps = get_or<std::int64_t>(d, "steps", 300);
        cfg.dataset.connect_radius = get_or<double>(d, "connect_radius", 0.045);
        if (d.contains("sim")) {
            check_keys(d.at("sim"), "dataset.sim",
                       {"dt", "steps_per_frame", "gravity", "radius", "stiffness",
                        "normal_damping", "wall_restitution", "tangent_damping", "mass"});
            SimConfig base;
            const auto& s = d.at("sim");
            base.dt = get_or<double>(s, "dt", base.dt);
            base.steps_per_frame = get_or<std::int64_t>(s, "steps_per_frame", base.steps_per_frame);
            base.gravity = get_or<double>(s, "gravity", base.gravity);
            base.radius = get_or<double>(s, "radius", base.radius);
            base.stiffness = get_or<double>(s, "stiffness", base.stiffness);
            base.normal_damping = get_or<double>(s, "normal_damping", base.normal_damping);
            base.wall_restitution = get_or<double>(s, "wall_restitution", base.wall_restitution);
            base.tangent_damping = get_or<double>(s, "tangent_damping", base.tangent_damping);
            base.mass = get_or<double>(s, "mass", base.mass);
            cfg.dataset.sim = base;
        }
    }

    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, "model", {"preset", "path", "seed", "latent", "rounds"});
        cfg.model.preset = get_or<std::string>(m, "preset", "");
        cfg.model.path = get_or<std::string>(m, "path", "");
        cfg.model.seed = get_or<std::uint64_t>(m, "seed", 1);
        cfg.model.latent = get_or<std::int64_t>(m, "latent", 32);
        cfg.model.rounds = get_or<std::int64_t>(m, "rounds", 5);
    }

    if (j.contains("training")) {
        const auto& t = j.at("training");
        check_keys(t, "training",
                   {"lr", "schedule", "batch", "epochs", "steps", "seed", "query_sub",
                    "input_noise_std", "test_cadence", "smooth_window", "adam"});
        cfg.training.lr = get_or<double>(t, "lr", 1e-4);
        cfg.training.batch = get_or<std::int64_t>(t, "batch", 32);
        cfg.training.epochs = get_or<std::int64_t>(t, "epochs", 100);
        cfg.training.steps = get_or<std::int64_t>(t, "steps", 0);
        cfg.training.seed = get_or<std::uint64_t>(t, "seed", 0);
        cfg.training.query_sub = get_or<std::int64_t>(t, "query_sub", 0);
        cfg.training.input_noise_std = get_or<double>(t, "input_noise_std", 0.0);
        cfg.training.test_cadence = get_or<std::int64_t>(t, "test_cadence", 0);
        cfg.smooth_window = get_or<std::int64_t>(t, "smooth_window", 100);
        if (t.contains("schedule")) {
            const auto& s = t.at("schedule");
            check_keys(s, "training.schedule", {"kind", "factor", "interval_frac"});
            const auto kind = get_or<std::string>(s, "kind", "constant");
            if (kind == "constant")
                cfg.training.schedule.kind = LrSchedule::Kind::constant;
            else if (kind == "step_decay")
                cfg.training.schedule.kind = LrSchedule::Kind::step_decay;
            else
                throw ConfigError("config: training.schedule.kind must be constant|step_decay");
            cfg.training.schedule.factor = get_or<double>(s, "factor", 0.5);
            cfg.training.schedule.interval_frac = get_or<double>(s, "interval_frac", 0.2);
        }
        if (t.contains("adam")) {
            const auto& a = t.at("adam");
            check_keys(a, "training.adam", {"beta1", "beta2", "eps"});
            cfg.training.adam.beta1 = get_or<double>(a, "beta1", 0.9);
            cfg.training.adam.beta2 = get_or<double>(a, "beta2", 0.999);
            cfg.training.adam.eps = get_or<double>(a, "eps", 1e-8);
        }
    }

    if (j.contains("evaluation")) {
        const auto& e = j.at("evaluation");
        check_keys(e, "evaluation",
                   {"metrics", "noise_levels", "ood_factor", "n_rollouts", "rollout_steps",
                    "noise_inject_level", "seed"});
        cfg.evaluation.metrics = get_or<std::vector<std::string>>(e, "metrics", {"mse", "rel_l2"});
        cfg.evaluation.noise_levels =
            get_or<std::vector<double>>(e, "noise_levels", {0.01, 0.05, 0.10});
        cfg.evaluation.ood_factor = get_or<double>(e, "ood_factor", 10.0);
        cfg.evaluation.n_rollouts = get_or<std::int64_t>(e, "n_rollouts", 10);
        cfg.evaluation.rollout_steps = get_or<std::int64_t>(e, "rollout_steps", 300);
        cfg.evaluation.noise_inject_level = get_or<double>(e, "noise_inject_level", 0.0);
        cfg.evaluation.seed = get_or<std::uint64_t>(e, "seed", 1);
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
    ExperimentConfig cfg = from_json(load_json_file(path));
    if (const char* env = std::getenv("KANBENCH_SEED")) {
        cfg.override_seed(static_cast<std::uint64_t>(std::strtoull(env, nullptr, 10)));
    }
    return cfg;
}

void ExperimentConfig::override_seed(std::uint64_t seed) {
    dataset.seed = seed;
    model.seed = seed;
    training.seed = seed;
    evaluation.seed = seed;
}

CompareConfig CompareConfig::from_file(const std::filesystem::path& path) {
    json j = load_json_file(path);
    check_keys(j, "", {"runs", "output"});
    CompareConfig cfg;
    cfg.runs = j.at("runs").get<std::vector<std::string>>();
    cfg.output = j.at("output").get<std::string>();
    if (cfg.runs.empty()) throw ConfigError("compare config: 'runs' is empty");
    return cfg;
}

void write_resolved_config(const ExperimentConfig& cfg) {
    auto f = open_out(std::filesystem::path(cfg.output) / "resolved_config.json");
    f << cfg.to_json().dump(2) << '\n';
}

namespace {

bool is_operator_problem(const std::string& p) {
    return p == "burgers" || p == "darcy1d" || p == "external";
}

OperatorDatasetConfig operator_config(const ExperimentConfig& cfg) {
    OperatorDatasetConfig oc;
    oc.problem = cfg.problem;
    oc.n_samples = cfg.dataset.n_samples;
    oc.n_train = cfg.dataset.n_train;
    oc.n_test = cfg.dataset.n_test;
    oc.seed = cfg.dataset.seed;
    oc.grf_length_scale = cfg.dataset.grf_length_scale;
    oc.grf_variance = cfg.dataset.grf_variance;
    if (cfg.problem == "burgers") {
        if (cfg.dataset.nx > 0) oc.burgers.nx = cfg.dataset.nx;
        oc.burgers.nt = cfg.dataset.nt;
        if (cfg.dataset.nu < 0.0) throw ConfigError("config: dataset.nu must be >= 0");
        oc.burgers.nu = cfg.dataset.nu;
        oc.burgers.t_final = cfg.dataset.t_final;
    } else if (cfg.problem == "darcy1d") {
        if (cfg.dataset.nx > 0) oc.darcy.nx = cfg.dataset.nx;
    }
    return oc;
}

FeaturizeConfig featurize_config(const ExperimentConfig& cfg) {
    FeaturizeConfig fc;
    fc.connect_radius = cfg.dataset.connect_radius;
    fc.frame_dt = cfg.dataset.sim.frame_dt();
    return fc;
}

void print_manifest_summary(const std::filesystem::path& dir, std::ostream& out) {
    ArrayStore store = ArrayStore::load(dir);
    out << "dataset " << dir.string() << "\n";
    for (const auto& name : store.names()) {
        const auto& a = store.at(name);
        out << "  " << name << " " << a.dtype << " " << shape_str(a.shape) << "\n";
    }
}

std::vector<double> moving_average(const std::vector<double>& v, std::int64_t window) {
    if (window < 2 || v.empty()) return v;
    std::vector<double> out(v.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        acc += v[i];
        if (i >= static_cast<std::size_t>(window)) acc -= v[i - static_cast<std::size_t>(window)];
        const auto count = std::min<std::size_t>(i + 1, static_cast<std::size_t>(window));
        out[i] = acc / static_cast<double>(count);
    }
    return out;
}

void write_loss_history(const std::filesystem::path& dir, const TrainHistory& history,
                        std::int64_t smooth_window) {
    {
        std::vector<std::vector<std::string>> rows;
        for (std::size_t i = 0; i < history.train_loss.size(); ++i)
            rows.push_back({std::to_string(i), format_double(history.train_loss[i])});
        write_csv(dir / "loss_history.csv", "epoch,loss", rows);
    }
    {
        auto smoothed = moving_average(history.train_loss, smooth_window);
        std::vector<std::vector<std::string>> rows;
        for (std::size_t i = 0; i < smoothed.size(); ++i)
            rows.push_back({std::to_string(i), format_double(smoothed[i])});
        write_csv(dir / "loss_history_smoothed.csv", "epoch,loss", rows);
    }
    if (!history.test_loss.empty()) {
        std::vector<std::vector<std::string>> rows;
        for (const auto& [epoch, loss] : history.test_loss)
            rows.push_back({std::to_string(epoch), format_double(loss)});
        write_csv(dir / "test_history.csv", "epoch,loss", rows);
    }
}

std::uint64_t dataset_hash(const OperatorDataset& ds) {
    std::uint64_t h = hash_tensor(ds.inputs);
    h = fnv1a(ds.targets.data(), static_cast<std::size_t>(ds.targets.numel()) * sizeof(double), h);
    return h;
}

std::uint64_t deeponet_hash(const DeepOnetModel& model) {
    std::uint64_t h = 14695981039346656037ull;
    auto& mut = const_cast<DeepOnetModel&>(model);
    visit_params(mut, [&](const std::string&, Tensor& t) {
        h = fnv1a(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(double), h);
    });
    return h;
}

std::uint64_t gns_hash(const GnsModel& model) {
    std::uint64_t h = 14695981039346656037ull;
    auto& mut = const_cast<GnsModel&>(model);
    visit_params(mut, [&](const std::string&, Tensor& t) {
        h = fnv1a(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(double), h);
    });
    return h;
}

bool wants_metric(const ExperimentConfig& cfg, const std::string& name) {
    for (const auto& m : cfg.evaluation.metrics)
        if (m == name) return true;
    return false;
}

} // namespace

void run_generate(const ExperimentConfig& cfg, std::ostream& out) {
    const auto dir = cfg.dataset_dir();
    if (cfg.problem == "particles") {
        if (cfg.dataset.n_trajectories < 1)
            throw ConfigError("config: dataset.n_trajectories must be >= 1");
        auto ds = make_trajectory_dataset(cfg.dataset.n_trajectories, cfg.dataset.n_particles,
                                          cfg.dataset.steps, cfg.dataset.seed, cfg.dataset.sim,
                                          cfg.dataset.n_train, cfg.dataset.n_test);
        save_trajectories(ds, dir);
    } else if (is_operator_problem(cfg.problem) && cfg.problem != "external") {
        auto ds = make_operator_dataset(operator_config(cfg));
        if (cfg.dataset.normalize) ds = normalize_dataset(ds).first;
        save_dataset(ds, dir);
    } else {
        throw ConfigError("config: cannot generate problem '" + cfg.problem + "'");
    }
    write_resolved_config(cfg);
    print_manifest_summary(dir, out);
}

void run_train(const ExperimentConfig& cfg, std::ostream& out) {
    const auto data_dir = cfg.dataset_dir();
    if (!std::filesystem::exists(data_dir / "manifest.json"))
        throw IoError("train: dataset not found at " + data_dir.string());
    const auto model_dir = cfg.model_dir();
    const auto out_dir = std::filesystem::path(cfg.output);
    if (cfg.model.preset.empty()) throw ConfigError("config: model.preset is required for train");

    TrainHistory history;
    std::int64_t params = 0;
    if (cfg.problem == "particles") {
        auto ds = load_trajectories(data_dir);
        auto feat = featurize_config(cfg);
        auto stats = compute_feature_stats(ds, feat);
        auto model = build_gns(cfg.model.preset, cfg.model.latent, cfg.model.rounds, feat, stats,
                               cfg.model.seed);
        if (cfg.training.steps > 0) history = train_gns(model, ds, cfg.training);
        save_gns(model, model_dir);
        params = param_count(model);
    } else {
        auto ds = load_dataset(data_dir);
        auto model = build_deeponet(cfg.model.preset, cfg.model.seed);
        if (cfg.training.epochs > 0) history = train_deeponet(model, ds, cfg.training);
        save_deeponet(model, model_dir, cfg.model.preset);
        params = param_count(model);
    }

    write_resolved_config(cfg);
    write_loss_history(out_dir, history, cfg.smooth_window);
    json meta;
    meta["preset"] = cfg.model.preset;
    meta["param_count"] = params;
    meta["total_steps"] = history.total_steps;
    meta["wall_seconds"] = history.wall_seconds;
    meta["seconds_per_1000_steps"] = history.seconds_per_1000_steps();
    meta["final_train_loss"] =
        history.train_loss.empty() ? 0.0 : history.train_loss.back();
    auto f = open_out(out_dir / "train_meta.json");
    f << meta.dump(2) << '\n';
    out << "trained " << cfg.model.preset << " (" << params << " parameters, "
        << history.total_steps << " steps)\n";
}

void run_evaluate(const ExperimentConfig& cfg, std::ostream& out) {
    const auto data_dir = cfg.dataset_dir();
    const auto model_dir = cfg.model_dir();
    if (!std::filesystem::exists(data_dir / "manifest.json"))
        throw IoError("evaluate: dataset not found at " + data_dir.string());
    if (!std::filesystem::exists(model_dir / "manifest.json"))
        throw IoError("evaluate: model not found at " + model_dir.string());
    const auto out_dir = std::filesystem::path(cfg.output);

    json report;
    std::vector<std::vector<std::string>> rows;
    auto add_row = [&](const std::string& metric, double value) {
        rows.push_back({metric, format_double(value)});
        report["values"][metric] = value;
    };

    if (cfg.problem == "particles") {
        auto ds = load_trajectories(data_dir);
        auto model = load_gns(model_dir);
        const auto& idx = ds.test_idx.empty() ? ds.train_idx : ds.test_idx;
        const double mse =
            evaluate_gns_onestep(model, ds, idx, 256, cfg.evaluation.seed);
        add_row("onestep_mse_test", mse);
        report["model_hash"] = gns_hash(model);
    } else {
        auto ds = load_dataset(data_dir);
        auto model = load_deeponet(model_dir);
        report["dataset_hash"] = dataset_hash(ds);
        report["model_hash"] = deeponet_hash(model);

        if (wants_metric(cfg, "mse") || wants_metric(cfg, "rel_l2")) {
            auto test = evaluate_deeponet(model, ds, ds.test_idx);
            add_row("test_mse", test.mse);
            add_row("test_rel_l2", test.rel_l2_mean);
            add_row("test_rel_l2_stacked", test.rel_l2_stacked);
            report["values"]["test_rel_l2_skipped"] = test.skipped;
            if (!ds.train_idx.empty()) {
                auto train = evaluate_deeponet(model, ds, ds.train_idx);
                add_row("train_mse", train.mse);
                add_row("train_rel_l2", train.rel_l2_mean);
            }
        }
        if (wants_metric(cfg, "noise")) {
            auto table = noise_robustness_eval(model, ds, cfg.evaluation.noise_levels,
                                               cfg.evaluation.seed);
            for (const auto& [level, value] : table)
                add_row("noise_rel_l2_" + format_double(level), value);
        }
        if (wants_metric(cfg, "ood")) {
            auto ood = scale_ood(ds, cfg.evaluation.ood_factor);
            add_row("ood_rel_l2", evaluate_deeponet(model, ood, ood.test_idx).rel_l2_mean);
        }
        if (wants_metric(cfg, "lipschitz")) {
            const auto& idx = ds.test_idx.empty() ? ds.train_idx : ds.test_idx;
            const auto m = ds.sensor_count();
            const auto q = ds.query_count();
            std::vector<std::vector<double>> inputs;
            std::vector<std::vector<double>> truths;
            for (auto i : idx) {
                auto view = ds.sample(i);
                inputs.emplace_back(view.u_sensors.begin(), view.u_sensors.end());
                truths.emplace_back(view.targets.begin(), view.targets.end());
            }
            std::int64_t skipped = 0;
            std::size_t cursor = 0;
            const double truth_l = estimate_lipschitz(
                [&](std::span<const double>) { return truths[cursor++]; }, inputs, &skipped);
            add_row("lipschitz_ground_truth", truth_l);
            report["values"]["lipschitz_skipped_pairs"] = skipped;

            TapePause pause;
            const double model_l = estimate_lipschitz(
                [&](std::span<const double> u) {
                    Tensor ut(Shape{static_cast<std::int64_t>(m)},
                              std::vector<double>(u.begin(), u.end()));
                    Tensor pred = deeponet_forward(model, ut, ds.queries);
                    return std::vector<double>(pred.values().begin(), pred.values().end());
                },
                inputs, &skipped);
            add_row("lipschitz_model", model_l);
            (void)q;
        }
    }

    report["config"] = cfg.to_json();
    report["disclosures"] = {
        {"rel_l2", "per-sample rel l2, arithmetic mean over samples (stacked variant also reported)"},
        {"percentile", "linear interpolation between order statistics"},
        {"rollout_noise", "std = sqrt(level * mean initial particle speed)"},
        {"dataset_noise", "std = level * per-sample std of input values"},
        {"rng", SeededRng::kAlgorithm}};
    auto f = open_out(out_dir / "metrics.json");
    f << report.dump(2) << '\n';
    write_csv(out_dir / "metrics.csv", "metric,value", rows);
    write_resolved_config(cfg);
    for (const auto& row : rows) out << row[0] << " = " << row[1] << "\n";
}

void run_rollout(const ExperimentConfig& cfg, std::ostream& out) {
    if (cfg.problem != "particles")
        throw ConfigError("rollout: only the particles problem has trajectories");
    const auto data_dir = cfg.dataset_dir();
    const auto model_dir = cfg.model_dir();
    if (!std::filesystem::exists(data_dir / "manifest.json"))
        throw IoError("rollout: dataset not found at " + data_dir.string());
    if (!std::filesystem::exists(model_dir / "manifest.json"))
        throw IoError("rollout: model not found at " + model_dir.string());
    const auto out_dir = std::filesystem::path(cfg.output);

    auto ds = load_trajectories(data_dir);
    auto model = load_gns(model_dir);
    const auto& idx = ds.test_idx.empty() ? ds.train_idx : ds.test_idx;
    if (idx.empty()) throw IoError("rollout: dataset has no test trajectories");
    const auto n_roll = std::min<std::int64_t>(cfg.evaluation.n_rollouts,
                                               static_cast<std::int64_t>(idx.size()));

    const auto w0 = model.feat.history + 1;
    std::vector<EnergySeries> pred_energies, truth_energies;
    std::vector<double> stacked;
    double tau_sum = 0.0;
    std::int64_t frames_out = 0, n_out = 0;
    for (std::int64_t r = 0; r < n_roll; ++r) {
        const auto& truth = ds.trajectories[static_cast<std::size_t>(idx[static_cast<std::size_t>(r)])];
        const auto n = truth.particles();
        std::span<const double> seed_frames(truth.positions.data(),
                                            static_cast<std::size_t>(w0 * n * 2));
        std::vector<double> seeded(seed_frames.begin(), seed_frames.end());
        if (cfg.evaluation.noise_inject_level > 0.0)
            seeded = inject_input_noise(seeded, w0, n, cfg.evaluation.noise_inject_level,
                                        mix_seed(cfg.evaluation.seed, static_cast<std::uint64_t>(r)),
                                        model.feat.frame_dt);
        auto result = rollout(model, seeded, n, cfg.evaluation.rollout_steps, &truth);

        Trajectory pred;
        pred.config = truth.config;
        pred.positions = result.positions;
        const auto overlap = std::min(pred.frames(), truth.frames());
        Trajectory pred_cut;
        pred_cut.config = truth.config;
        pred_cut.positions = Tensor(Shape{overlap, n, 2},
                                    std::vector<double>(result.positions.data(),
                                                        result.positions.data() + overlap * n * 2));
        Trajectory truth_cut;
        truth_cut.config = truth.config;
        truth_cut.positions = Tensor(Shape{overlap, n, 2},
                                     std::vector<double>(truth.positions.data(),
                                                         truth.positions.data() + overlap * n * 2));
        pred_energies.push_back(compute_energies(pred_cut));
        truth_energies.push_back(compute_energies(truth_cut));
        tau_sum += critical_time(truth);

        auto v = result.positions.values();
        stacked.insert(stacked.end(), v.begin(), v.end());
        frames_out = result.positions.dim(0);
        n_out = n;
    }

    ArrayStore store;
    store.put_f64("positions", Shape{n_roll, frames_out, n_out, 2}, std::move(stacked));
    store.metadata["kind"] = "rollouts";
    store.metadata["sim"] = ds.metadata.at("sim");
    store.metadata["noise_inject_level"] = cfg.evaluation.noise_inject_level;
    store.metadata["noise_convention"] = "std = sqrt(level * mean initial particle speed)";
    store.save(out_dir / "rollouts");

    const double tau_c = tau_sum / static_cast<double>(n_roll);
    auto stats = energy_error_stats(pred_energies, truth_energies, tau_c, model.feat.frame_dt);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t t = 0; t < stats.t_over_tau.size(); ++t)
        rows.push_back({format_double(stats.t_over_tau[t]), format_double(stats.ke_mean[t]),
                        format_double(stats.ke_p99[t]), format_double(stats.pe_mean[t]),
                        format_double(stats.pe_p99[t])});
    write_csv(out_dir / "energy_errors.csv", "t_over_tau_c,ke_mean,ke_p99,pe_mean,pe_p99", rows);
    write_resolved_config(cfg);
    out << "rolled out " << n_roll << " trajectories (" << frames_out << " frames each)\n";
}

void run_compare(const CompareConfig& cfg, std::ostream& out) {
    struct Row {
        std::string name, preset;
        std::int64_t params = 0;
        double final_loss = 0.0, test_mse = 0.0, test_rel_l2 = 0.0, sec_per_1000 = 0.0;
    };
    std::vector<Row> rows;
    for (const auto& run : cfg.runs) {
        const std::filesystem::path dir(run);
        if (!std::filesystem::exists(dir / "train_meta.json") ||
            !std::filesystem::exists(dir / "metrics.json"))
            throw IoError("compare: run '" + run + "' is incomplete (train_meta.json / metrics.json)");
        json meta = load_json_file(dir / "train_meta.json");
        json metrics = load_json_file(dir / "metrics.json");
        Row row;
        row.name = dir.filename().string().empty() ? run : dir.filename().string();
        row.preset = meta.value("preset", "");
        row.params = meta.value("param_count", 0);
        row.final_loss = meta.value("final_train_loss", 0.0);
        row.sec_per_1000 = meta.value("seconds_per_1000_steps", 0.0);
        const auto& values = metrics.at("values");
        row.test_mse = values.contains("test_mse") ? values["test_mse"].get<double>()
                                                   : values.value("onestep_mse_test", 0.0);
        row.test_rel_l2 = values.value("test_rel_l2", 0.0);
        rows.push_back(row);
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.name < b.name; });

    std::vector<std::vector<std::string>> csv;
    for (const auto& r : rows)
        csv.push_back({r.name, r.preset, std::to_string(r.params), format_double(r.final_loss),
                       format_double(r.test_mse), format_double(r.test_rel_l2),
                       format_double(r.sec_per_1000)});
    const std::filesystem::path out_dir(cfg.output);
    write_csv(out_dir / "comparison.csv",
              "config,model,param_count,train_loss_final,test_mse,test_rel_l2,seconds_per_1000_steps",
              csv);

    auto md = open_out(out_dir / "comparison.md");
    md << "| config | model | params | final train loss | test MSE | test rel l2 | s/1000 steps |\n";
    md << "|---|---|---|---|---|---|---|\n";
    for (const auto& r : rows)
        md << "| " << r.name << " | " << r.preset << " | " << r.params << " | "
           << format_double(r.final_loss) << " | " << format_double(r.test_mse) << " | "
           << format_double(r.test_rel_l2) << " | " << format_double(r.sec_per_1000) << " |\n";
    for (const auto& r : rows)
        out << r.name << " " << r.preset << " rel_l2=" << format_double(r.test_rel_l2) << "\n";
}

} // namespace kanbench
