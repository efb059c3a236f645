#include "kanbench/cli.hpp"

#include <CLI11.hpp>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "kanbench/experiment.hpp"

namespace kanbench {

namespace {

struct CommonOpts {
    std::string config_path;
    std::int64_t seed = -1;
    std::string output_override;
    int jobs = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("config", opts.config_path, "experiment config (JSON)")->required();
    cmd->add_option("--seed", opts.seed, "override every seed in the config");
    cmd->add_option("--output", opts.output_override, "override the output directory");
    cmd->add_option("--jobs", opts.jobs, "worker threads for sample-parallel stages");
}

ExperimentConfig load(const CommonOpts& opts) {
    ExperimentConfig cfg = ExperimentConfig::from_file(opts.config_path);
    if (opts.seed >= 0) cfg.override_seed(static_cast<std::uint64_t>(opts.seed));
    if (!opts.output_override.empty()) cfg.output = opts.output_override;
#if defined(_OPENMP)
    if (opts.jobs > 0) omp_set_num_threads(opts.jobs);
#endif
    return cfg;
}

} // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"KAN / MLP physics-learning benchmarks"};
    app.require_subcommand(1);

    CommonOpts gen_opts, train_opts, eval_opts, roll_opts;
    auto* gen = app.add_subcommand("generate", "generate a dataset directory");
    add_common(gen, gen_opts);
    auto* train = app.add_subcommand("train", "train a model on an existing dataset");
    add_common(train, train_opts);
    auto* eval = app.add_subcommand("evaluate", "compute metrics for a trained model");
    add_common(eval, eval_opts);
    auto* roll = app.add_subcommand("rollout", "roll out a trained simulator and score energies");
    add_common(roll, roll_opts);

    std::string compare_path, compare_output;
    auto* cmp = app.add_subcommand("compare", "tabulate completed runs");
    cmp->add_option("config", compare_path, "compare config (JSON with runs[], output)")->required();
    cmp->add_option("--output", compare_output, "override the output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) run_generate(load(gen_opts), out);
        if (train->parsed()) run_train(load(train_opts), out);
        if (eval->parsed()) run_evaluate(load(eval_opts), out);
        if (roll->parsed()) run_rollout(load(roll_opts), out);
        if (cmp->parsed()) {
            CompareConfig cfg = CompareConfig::from_file(compare_path);
            if (!compare_output.empty()) cfg.output = compare_output;
            run_compare(cfg, out);
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        err << "missing or failed dependency: " << e.what() << "\n";
        return 3;
    } catch (const ShapeError& e) {
        err << "shape error: " << e.what() << "\n";
        return 4;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace kanbench
