#include "kanbench/train_eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>

#include "kanbench/kernels.hpp"
#include "kanbench/rng.hpp"

namespace kanbench {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_seconds(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Deterministic Fisher-Yates driven by the project generator.
void shuffle_indices(std::vector<std::int64_t>& idx, SeededRng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.next_uniform() * static_cast<double>(i));
        std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
    }
}

// k distinct values from [0, n), order irrelevant but deterministic.
std::vector<std::int64_t> sample_subset(std::int64_t n, std::int64_t k, SeededRng& rng) {
    std::vector<std::int64_t> all(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    for (std::int64_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::int64_t>(rng.next_uniform() * static_cast<double>(n - i));
        std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(std::min(j, n - 1))]);
    }
    all.resize(static_cast<std::size_t>(k));
    return all;
}

Tensor gather_dataset_rows(const Tensor& src, std::span<const std::int64_t> rows) {
    const auto w = src.dim(1);
    Tensor out(Shape{static_cast<std::int64_t>(rows.size()), w});
    auto* o = out.mutable_values().data();
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::memcpy(o + static_cast<std::int64_t>(r) * w, src.data() + rows[r] * w,
                    static_cast<std::size_t>(w) * sizeof(double));
    return out;
}

} // namespace

AdamState::AdamState(std::vector<NamedParam> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    if (cfg_.lr <= 0.0) throw ConfigError("Adam: learning rate must be > 0");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(static_cast<std::size_t>(p.value->numel()), 0.0);
        v_.emplace_back(static_cast<std::size_t>(p.value->numel()), 0.0);
    }
}

void AdamState::step(const GradientMap& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = params_[pi];
        const double* g = grads.find(*p.value);
        const auto n = p.value->numel();
        if (g && !kernels::all_finite(g, n))
            throw NumericError("Adam: non-finite gradient for parameter " + p.name);
        auto* m = m_[pi].data();
        auto* v = v_[pi].data();
        auto w = p.value->mutable_values();
        for (std::int64_t i = 0; i < n; ++i) {
            const double gi = g ? g[i] : 0.0;
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[static_cast<std::size_t>(i)] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

double LrSchedule::at(double base_lr, std::int64_t epoch, std::int64_t total) const {
    if (kind == Kind::constant) return base_lr;
    const auto interval = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(interval_frac * static_cast<double>(total)));
    return base_lr * std::pow(factor, static_cast<double>(epoch / interval));
}

TrainHistory train_deeponet(DeepOnetModel& model, const OperatorDataset& ds,
                            const TrainConfig& cfg) {
    model.validate();
    if (ds.train_idx.empty()) throw ConfigError("train_deeponet: dataset has no train split");
    if (ds.sensor_count() != model.sensor_count())
        throw ShapeError("train_deeponet: dataset sensors " + std::to_string(ds.sensor_count()) +
                         " vs model " + std::to_string(model.sensor_count()));
    if (ds.coord_dim() != model.coord_dim())
        throw ShapeError("train_deeponet: coordinate dims disagree");
    if (cfg.batch < 1 || cfg.epochs < 1) throw ConfigError("train_deeponet: bad batch/epochs");

    std::vector<NamedParam> params;
    visit_params(model, [&](const std::string& name, Tensor& value) {
        params.push_back({name, &value});
    });
    AdamConfig adam_cfg = cfg.adam;
    adam_cfg.lr = cfg.lr;
    AdamState adam(params, adam_cfg);

    const auto q = ds.query_count();
    const auto d = ds.coord_dim();
    const bool subsample = cfg.query_sub > 0 && cfg.query_sub < q;

    TrainHistory history;
    const auto start = Clock::now();
    std::vector<std::int64_t> order(ds.train_idx.begin(), ds.train_idx.end());

    for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        adam.set_lr(cfg.schedule.at(cfg.lr, epoch, cfg.epochs));
        SeededRng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        shuffle_indices(order, rng);

        double epoch_loss = 0.0;
        std::int64_t batches = 0;
        for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(cfg.batch)) {
            const auto hi = std::min(order.size(), lo + static_cast<std::size_t>(cfg.batch));
            std::span<const std::int64_t> rows(order.data() + lo, hi - lo);
            Tensor u = gather_dataset_rows(ds.inputs, rows);

            Tensor queries = ds.queries;
            Tensor targets;
            if (subsample) {
                auto qs = sample_subset(q, cfg.query_sub, rng);
                queries = Tensor(Shape{cfg.query_sub, d});
                auto* qd = queries.mutable_values().data();
                for (std::int64_t r = 0; r < cfg.query_sub; ++r)
                    for (std::int64_t c = 0; c < d; ++c)
                        qd[r * d + c] = ds.queries(qs[static_cast<std::size_t>(r)], c);
                targets = Tensor(Shape{static_cast<std::int64_t>(rows.size()), cfg.query_sub});
                auto* td = targets.mutable_values().data();
                for (std::size_t b = 0; b < rows.size(); ++b)
                    for (std::int64_t r = 0; r < cfg.query_sub; ++r)
                        td[static_cast<std::int64_t>(b) * cfg.query_sub + r] =
                            ds.targets(rows[b], qs[static_cast<std::size_t>(r)]);
            } else {
                targets = gather_dataset_rows(ds.targets, rows);
            }

            Tape tape;
            Tensor loss = operator_mse_loss(model, u, queries, targets);
            const double loss_value = loss.value();
            if (!std::isfinite(loss_value))
                throw NumericError("train_deeponet: loss diverged at epoch " +
                                   std::to_string(epoch));
            adam.step(backward(loss));
            epoch_loss += loss_value;
            ++batches;
        }
        history.train_loss.push_back(epoch_loss / static_cast<double>(batches));
        history.total_steps += batches;

        if (cfg.test_cadence > 0 && !ds.test_idx.empty() &&
            (epoch % cfg.test_cadence == cfg.test_cadence - 1 || epoch + 1 == cfg.epochs)) {
            auto eval = evaluate_deeponet(model, ds, ds.test_idx);
            history.test_loss.emplace_back(epoch, eval.mse);
        }
    }
    history.wall_seconds = elapsed_seconds(start);
    return history;
}

TrainHistory train_gns(GnsModel& model, const TrajectoryDataset& ds, const TrainConfig& cfg) {
    if (ds.train_idx.empty()) throw ConfigError("train_gns: dataset has no train split");
    if (cfg.steps < 1 || cfg.batch < 1) throw ConfigError("train_gns: bad steps/batch");
    const auto h = model.feat.history;
    const auto window = h + 2; // 6 input frames + target frame

    std::vector<NamedParam> params;
    visit_params(model, [&](const std::string& name, Tensor& value) {
        params.push_back({name, &value});
    });
    AdamConfig adam_cfg = cfg.adam;
    adam_cfg.lr = cfg.lr;
    AdamState adam(params, adam_cfg);

    TrainHistory history;
    const auto start = Clock::now();
    std::vector<double> frames;
    for (std::int64_t step = 0; step < cfg.steps; ++step) {
        adam.set_lr(cfg.schedule.at(cfg.lr, step, cfg.steps));
        SeededRng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(step)));

        Tape tape;
        Tensor loss;
        for (std::int64_t b = 0; b < cfg.batch; ++b) {
            const auto traj_pick = static_cast<std::size_t>(
                rng.next_uniform() * static_cast<double>(ds.train_idx.size()));
            const auto& traj = ds.trajectories[static_cast<std::size_t>(
                ds.train_idx[std::min(traj_pick, ds.train_idx.size() - 1)])];
            const auto n = traj.particles();
            const auto t_count = traj.frames();
            if (t_count < window)
                throw ConfigError("train_gns: trajectories shorter than the feature window");
            const auto t0 = static_cast<std::int64_t>(
                rng.next_uniform() * static_cast<double>(t_count - window + 1));

            frames.assign(traj.positions.data() + t0 * n * 2,
                          traj.positions.data() + (t0 + window) * n * 2);
            if (cfg.input_noise_std > 0.0) {
                // Random-walk corruption on the input frames; the target frame
                // stays exact so the model learns to correct drift.
                for (std::int64_t i = 0; i < n * 2; ++i) {
                    double walk = 0.0;
                    for (std::int64_t f = 0; f < window - 1; ++f) {
                        walk += cfg.input_noise_std * rng.next_normal();
                        frames[static_cast<std::size_t>(f * n * 2 + i)] += walk;
                    }
                }
            }
            GraphSample sample = featurize(frames, window, n, model.feat, model.stats);
            Tensor pred = gns_forward(model, sample);
            Tensor sample_loss = mse(pred, sample.target_acc);
            loss = b == 0 ? sample_loss : add(loss, sample_loss);
        }
        if (cfg.batch > 1) loss = scale(loss, 1.0 / static_cast<double>(cfg.batch));
        const double loss_value = loss.value();
        if (!std::isfinite(loss_value))
            throw NumericError("train_gns: loss diverged at step " + std::to_string(step));
        adam.step(backward(loss));
        history.train_loss.push_back(loss_value);
        ++history.total_steps;
    }
    history.wall_seconds = elapsed_seconds(start);
    return history;
}

double rel_l2(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size())
        throw ShapeError("rel_l2: size mismatch " + std::to_string(pred.size()) + " vs " +
                         std::to_string(truth.size()));
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        num += d * d;
        den += truth[i] * truth[i];
    }
    if (den == 0.0)
        throw NumericError("rel_l2: zero-norm truth");
    return std::sqrt(num / den);
}

EvalResult evaluate_deeponet(const DeepOnetModel& model, const OperatorDataset& ds,
                             std::span<const std::int64_t> indices) {
    if (indices.empty()) throw ConfigError("evaluate_deeponet: empty index list");
    TapePause pause;
    EvalResult result;
    double stacked_num = 0.0, stacked_den = 0.0, sq_sum = 0.0, rel_sum = 0.0;
    std::int64_t rel_count = 0;

    const auto q = ds.query_count();
    constexpr std::int64_t kChunk = 64;
    for (std::size_t lo = 0; lo < indices.size(); lo += kChunk) {
        const auto hi = std::min(indices.size(), lo + kChunk);
        std::span<const std::int64_t> rows(indices.data() + lo, hi - lo);
        Tensor u = gather_dataset_rows(ds.inputs, rows);
        Tensor pred = deeponet_forward(model, u, ds.queries);
        const auto* pd = pred.data();
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto* truth = ds.targets.data() + rows[r] * q;
            const auto* p = pd + static_cast<std::int64_t>(r) * q;
            double num = 0.0, den = 0.0;
            for (std::int64_t c = 0; c < q; ++c) {
                const double d = p[c] - truth[c];
                num += d * d;
                den += truth[c] * truth[c];
            }
            sq_sum += num;
            stacked_num += num;
            stacked_den += den;
            if (den > 0.0) {
                rel_sum += std::sqrt(num / den);
                ++rel_count;
            } else {
                ++result.skipped;
            }
        }
    }
    result.mse = sq_sum / static_cast<double>(static_cast<std::int64_t>(indices.size()) * q);
    result.rel_l2_mean = rel_count > 0 ? rel_sum / static_cast<double>(rel_count) : 0.0;
    result.rel_l2_stacked = stacked_den > 0.0 ? std::sqrt(stacked_num / stacked_den) : 0.0;
    return result;
}

double evaluate_gns_onestep(const GnsModel& model, const TrajectoryDataset& ds,
                            std::span<const std::int64_t> indices, std::int64_t n_windows,
                            std::uint64_t seed) {
    if (indices.empty()) throw ConfigError("evaluate_gns_onestep: empty index list");
    TapePause pause;
    const auto window = model.feat.history + 2;
    SeededRng rng(seed);
    double total = 0.0;
    std::vector<double> frames;
    for (std::int64_t w = 0; w < n_windows; ++w) {
        const auto pick = static_cast<std::size_t>(rng.next_uniform() *
                                                   static_cast<double>(indices.size()));
        const auto& traj =
            ds.trajectories[static_cast<std::size_t>(indices[std::min(pick, indices.size() - 1)])];
        const auto n = traj.particles();
        const auto t0 = static_cast<std::int64_t>(
            rng.next_uniform() * static_cast<double>(traj.frames() - window + 1));
        frames.assign(traj.positions.data() + t0 * n * 2,
                      traj.positions.data() + (t0 + window) * n * 2);
        GraphSample sample = featurize(frames, window, n, model.feat, model.stats);
        Tensor pred = gns_forward(model, sample);
        Tensor diff = sub(pred, sample.target_acc);
        total += kernels::sum(mul(diff, diff).data(), diff.numel()) /
                 static_cast<double>(diff.numel());
    }
    return total / static_cast<double>(n_windows);
}

double estimate_lipschitz(const std::function<std::vector<double>(std::span<const double>)>& f,
                          const std::vector<std::vector<double>>& inputs,
                          std::int64_t* skipped_pairs) {
    if (inputs.size() < 2) throw ConfigError("estimate_lipschitz: need at least two inputs");
    std::vector<std::vector<double>> outputs;
    outputs.reserve(inputs.size());
    for (const auto& u : inputs) outputs.push_back(f(u));

    double best = 0.0;
    std::int64_t skipped = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        for (std::size_t j = i + 1; j < inputs.size(); ++j) {
            double din = 0.0;
            for (std::size_t c = 0; c < inputs[i].size(); ++c) {
                const double d = inputs[i][c] - inputs[j][c];
                din += d * d;
            }
            if (din == 0.0) {
                ++skipped;
                continue;
            }
            double dout = 0.0;
            for (std::size_t c = 0; c < outputs[i].size(); ++c) {
                const double d = outputs[i][c] - outputs[j][c];
                dout += d * d;
            }
            best = std::max(best, std::sqrt(dout / din));
        }
    if (skipped_pairs) *skipped_pairs = skipped;
    return best;
}

std::vector<std::pair<double, double>> noise_robustness_eval(const DeepOnetModel& model,
                                                             const OperatorDataset& ds,
                                                             std::span<const double> levels,
                                                             std::uint64_t seed) {
    if (ds.test_idx.empty()) throw ConfigError("noise_robustness_eval: dataset has no test split");
    std::vector<std::pair<double, double>> table;
    for (double level : levels) {
        if (level == 0.0) {
            table.emplace_back(0.0, evaluate_deeponet(model, ds, ds.test_idx).rel_l2_mean);
            continue;
        }
        OperatorDataset noisy = add_noise_resolve(ds, level, mix_seed(seed, static_cast<std::uint64_t>(
                                                                                level * 1e6)));
        table.emplace_back(level, evaluate_deeponet(model, noisy, noisy.test_idx).rel_l2_mean);
    }
    return table;
}

double percentile_linear(std::vector<double> values, double q) {
    if (values.empty()) throw ConfigError("percentile_linear: empty sample");
    if (q < 0.0 || q > 1.0) throw ConfigError("percentile_linear: q must be in [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

EnergyErrorStats energy_error_stats(const std::vector<EnergySeries>& predicted,
                                    const std::vector<EnergySeries>& truth, double tau_c,
                                    double frame_dt) {
    if (predicted.size() != truth.size() || predicted.empty())
        throw ConfigError("energy_error_stats: rollout counts disagree or are empty");
    const auto frames = predicted.front().kinetic.size();
    for (std::size_t r = 0; r < predicted.size(); ++r)
        if (predicted[r].kinetic.size() != frames || truth[r].kinetic.size() != frames)
            throw ConfigError("energy_error_stats: rollout lengths disagree");
    if (tau_c <= 0.0) throw ConfigError("energy_error_stats: tau_c must be > 0");

    EnergyErrorStats stats;
    std::vector<double> ke_err(predicted.size()), pe_err(predicted.size());
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t r = 0; r < predicted.size(); ++r) {
            ke_err[r] = std::abs(predicted[r].kinetic[t] - truth[r].kinetic[t]);
            pe_err[r] = std::abs(predicted[r].potential[t] - truth[r].potential[t]);
        }
        stats.t_over_tau.push_back(static_cast<double>(t) * frame_dt / tau_c);
        stats.ke_mean.push_back(kernels::sum(ke_err.data(), static_cast<std::int64_t>(ke_err.size())) /
                                static_cast<double>(ke_err.size()));
        stats.ke_median.push_back(percentile_linear(ke_err, 0.5));
        stats.ke_p99.push_back(percentile_linear(ke_err, 0.99));
        stats.pe_mean.push_back(kernels::sum(pe_err.data(), static_cast<std::int64_t>(pe_err.size())) /
                                static_cast<double>(pe_err.size()));
        stats.pe_median.push_back(percentile_linear(pe_err, 0.5));
        stats.pe_p99.push_back(percentile_linear(pe_err, 0.99));
    }
    return stats;
}

std::uint64_t fnv1a(const void* data, std::size_t nbytes, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < nbytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t hash_tensor(const Tensor& t) {
    std::uint64_t h = fnv1a(t.shape().data(), t.shape().size() * sizeof(std::int64_t));
    return fnv1a(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(double), h);
}

} // namespace kanbench
