#include "kanbench/pde_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "kanbench/dataset_io.hpp"
#include "kanbench/kernels.hpp"
#include "kanbench/rng.hpp"

namespace kanbench {

namespace {

using nlohmann::json;

double vec_mean(std::span<const double> v) {
    return kernels::sum(v.data(), static_cast<std::int64_t>(v.size())) /
           static_cast<double>(v.size());
}

double vec_std(std::span<const double> v, double mean) {
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

// Smallest eigenvalue estimate via cyclic Jacobi; only used for the error
// message when the jittered covariance fails to factor.
double jacobi_smallest_eigenvalue(std::vector<double> a, std::int64_t n) {
    for (int sweep = 0; sweep < 30; ++sweep) {
        double off = 0.0;
        for (std::int64_t p = 0; p < n; ++p)
            for (std::int64_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        if (off < 1e-24) break;
        for (std::int64_t p = 0; p < n; ++p)
            for (std::int64_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::int64_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::int64_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
    }
    double mn = a[0];
    for (std::int64_t i = 1; i < n; ++i) mn = std::min(mn, a[i * n + i]);
    return mn;
}

// In-place lower Cholesky; returns false on a non-positive pivot.
bool cholesky(std::vector<double>& a, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j <= i; ++j) {
            double s = a[i * n + j];
            for (std::int64_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            if (i == j) {
                if (s <= 0.0) return false;
                a[i * n + i] = std::sqrt(s);
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
        for (std::int64_t j = i + 1; j < n; ++j) a[i * n + j] = 0.0;
    }
    return true;
}

double godunov_flux(double ul, double ur) {
    const auto f = [](double u) { return 0.5 * u * u; };
    if (ul <= ur) {
        if (ul >= 0.0) return f(ul);
        if (ur <= 0.0) return f(ur);
        return 0.0; // sonic point of u^2/2
    }
    return std::max(f(ul), f(ur));
}

} // namespace

GrfSampler::GrfSampler(GrfConfig cfg, std::vector<double> points)
    : cfg_(cfg), points_(std::move(points)) {
    if (cfg_.n_points != static_cast<std::int64_t>(points_.size()))
        throw ConfigError("GrfSampler: n_points does not match point list");
    if (cfg_.length_scale <= 0.0) throw ConfigError("GrfSampler: length_scale must be > 0");
    if (cfg_.variance <= 0.0) throw ConfigError("GrfSampler: variance must be > 0");
    const auto n = cfg_.n_points;
    std::vector<double> k(static_cast<std::size_t>(n * n));
    const double inv2l2 = 1.0 / (2.0 * cfg_.length_scale * cfg_.length_scale);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            const double d = points_[static_cast<std::size_t>(i)] - points_[static_cast<std::size_t>(j)];
            k[static_cast<std::size_t>(i * n + j)] = cfg_.variance * std::exp(-d * d * inv2l2);
        }
    for (std::int64_t i = 0; i < n; ++i) k[static_cast<std::size_t>(i * n + i)] += 1e-10;
    std::vector<double> original = k;
    if (!cholesky(k, n)) {
        const double mn = jacobi_smallest_eigenvalue(std::move(original), n);
        throw NumericError("GrfSampler: covariance is not positive definite after jitter; "
                           "smallest eigenvalue ~= " + std::to_string(mn));
    }
    chol_ = std::move(k);
}

std::vector<double> GrfSampler::sample(std::uint64_t seed) const {
    const auto n = cfg_.n_points;
    SeededRng rng(seed);
    std::vector<double> z(static_cast<std::size_t>(n));
    for (auto& x : z) x = rng.next_normal();
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j <= i; ++j)
            s += chol_[static_cast<std::size_t>(i * n + j)] * z[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(i)] = s;
    }
    return out;
}

std::vector<double> sample_grf(const GrfConfig& cfg, std::uint64_t seed) {
    std::vector<double> pts(static_cast<std::size_t>(cfg.n_points));
    for (std::int64_t i = 0; i < cfg.n_points; ++i)
        pts[static_cast<std::size_t>(i)] =
            cfg.n_points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(cfg.n_points - 1);
    return GrfSampler(cfg, std::move(pts)).sample(seed);
}

std::vector<double> solve_burgers(std::span<const double> u0, const BurgersConfig& cfg) {
    const auto nx = cfg.nx;
    if (nx < 3) throw ConfigError("solve_burgers: nx must be >= 3");
    if (cfg.nt < 1) throw ConfigError("solve_burgers: nt must be >= 1");
    if (cfg.nu < 0.0) throw ConfigError("solve_burgers: negative viscosity");
    if (static_cast<std::int64_t>(u0.size()) != nx)
        throw ShapeError("solve_burgers: u0 has " + std::to_string(u0.size()) +
                         " values, expected " + std::to_string(nx));

    const double dx = 1.0 / static_cast<double>(nx);
    std::vector<double> u(u0.begin(), u0.end());
    std::vector<double> flux(static_cast<std::size_t>(nx));
    std::vector<double> out(static_cast<std::size_t>((cfg.nt + 1) * nx));
    std::memcpy(out.data(), u.data(), static_cast<std::size_t>(nx) * sizeof(double));

    std::int64_t substep = 0;
    double t = 0.0;
    for (std::int64_t slice = 1; slice <= cfg.nt; ++slice) {
        const double t_target = cfg.t_final * static_cast<double>(slice) / static_cast<double>(cfg.nt);
        while (t < t_target - 1e-14) {
            const double umax = kernels::max_abs(u.data(), nx);
            double dt = t_target - t;
            if (umax > 0.0) dt = std::min(dt, 0.4 * dx / umax);
            if (cfg.nu > 0.0) dt = std::min(dt, 0.4 * dx * dx / (2.0 * cfg.nu));

            for (std::int64_t i = 0; i < nx; ++i) {
                const double ul = u[static_cast<std::size_t>(i)];
                const double ur = u[static_cast<std::size_t>((i + 1) % nx)];
                flux[static_cast<std::size_t>(i)] = godunov_flux(ul, ur);
            }
            const double lam = dt / dx;
            const double dif = cfg.nu * dt / (dx * dx);
            double prev = u[static_cast<std::size_t>(nx - 1)]; // u_{i-1} before update
            const double u_first = u[0];
            for (std::int64_t i = 0; i < nx; ++i) {
                const double ui = u[static_cast<std::size_t>(i)];
                const double un = (i + 1 < nx) ? u[static_cast<std::size_t>(i + 1)] : u_first;
                const double fl = flux[static_cast<std::size_t>((i + nx - 1) % nx)];
                const double fr = flux[static_cast<std::size_t>(i)];
                u[static_cast<std::size_t>(i)] = ui - lam * (fr - fl) + dif * (un - 2.0 * ui + prev);
                prev = ui;
            }
            t += dt;
            ++substep;
            if (!kernels::all_finite(u.data(), nx))
                throw NumericError("solve_burgers: non-finite state at substep " +
                                   std::to_string(substep));
        }
        t = t_target;
        std::memcpy(out.data() + slice * nx, u.data(), static_cast<std::size_t>(nx) * sizeof(double));
    }
    return out;
}

namespace {

double darcy_kappa(double u) { return 0.2 + u * u; }

double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

// Face permeabilities for a candidate solution, boundaries at u = 0.
void darcy_faces(std::span<const double> u, std::vector<double>& face) {
    const auto nx = static_cast<std::int64_t>(u.size());
    face.resize(static_cast<std::size_t>(nx + 1));
    face[0] = harmonic(darcy_kappa(0.0), darcy_kappa(u[0]));
    for (std::int64_t i = 1; i < nx; ++i)
        face[static_cast<std::size_t>(i)] =
            harmonic(darcy_kappa(u[static_cast<std::size_t>(i - 1)]),
                     darcy_kappa(u[static_cast<std::size_t>(i)]));
    face[static_cast<std::size_t>(nx)] =
        harmonic(darcy_kappa(u[static_cast<std::size_t>(nx - 1)]), darcy_kappa(0.0));
}

} // namespace

std::vector<double> solve_darcy1d(std::span<const double> s, std::int64_t nx) {
    if (nx < 3) throw ConfigError("solve_darcy1d: nx must be >= 3");
    if (static_cast<std::int64_t>(s.size()) != nx)
        throw ShapeError("solve_darcy1d: source has " + std::to_string(s.size()) +
                         " values, expected " + std::to_string(nx));
    const double h = 1.0 / static_cast<double>(nx + 1);
    const double inv_h2 = 1.0 / (h * h);

    std::vector<double> u(static_cast<std::size_t>(nx), 0.0);
    std::vector<double> face, lower(static_cast<std::size_t>(nx)), diag(static_cast<std::size_t>(nx)),
        upper(static_cast<std::size_t>(nx)), rhs(static_cast<std::size_t>(nx)),
        next(static_cast<std::size_t>(nx));

    for (int iter = 0; iter < 200; ++iter) {
        darcy_faces(u, face);
        for (std::int64_t i = 0; i < nx; ++i) {
            const double kl = face[static_cast<std::size_t>(i)];
            const double kr = face[static_cast<std::size_t>(i + 1)];
            diag[static_cast<std::size_t>(i)] = (kl + kr) * inv_h2;
            lower[static_cast<std::size_t>(i)] = i > 0 ? -kl * inv_h2 : 0.0;
            upper[static_cast<std::size_t>(i)] = i + 1 < nx ? -kr * inv_h2 : 0.0;
            rhs[static_cast<std::size_t>(i)] = s[static_cast<std::size_t>(i)];
        }
        // Thomas algorithm; diagonal dominance follows from kappa >= 0.2.
        std::vector<double> cp(static_cast<std::size_t>(nx)), dp(static_cast<std::size_t>(nx));
        cp[0] = upper[0] / diag[0];
        dp[0] = rhs[0] / diag[0];
        for (std::int64_t i = 1; i < nx; ++i) {
            const double m = diag[static_cast<std::size_t>(i)] -
                             lower[static_cast<std::size_t>(i)] * cp[static_cast<std::size_t>(i - 1)];
            cp[static_cast<std::size_t>(i)] = upper[static_cast<std::size_t>(i)] / m;
            dp[static_cast<std::size_t>(i)] =
                (rhs[static_cast<std::size_t>(i)] -
                 lower[static_cast<std::size_t>(i)] * dp[static_cast<std::size_t>(i - 1)]) / m;
        }
        next[static_cast<std::size_t>(nx - 1)] = dp[static_cast<std::size_t>(nx - 1)];
        for (std::int64_t i = nx - 2; i >= 0; --i)
            next[static_cast<std::size_t>(i)] =
                dp[static_cast<std::size_t>(i)] -
                cp[static_cast<std::size_t>(i)] * next[static_cast<std::size_t>(i + 1)];

        double delta = 0.0;
        for (std::int64_t i = 0; i < nx; ++i)
            delta = std::max(delta, std::abs(next[static_cast<std::size_t>(i)] -
                                             u[static_cast<std::size_t>(i)]));
        u.swap(next);
        if (!kernels::all_finite(u.data(), nx))
            throw NumericError("solve_darcy1d: non-finite iterate at Picard step " +
                               std::to_string(iter + 1));
        if (delta < 1e-10) return u;
    }
    throw NumericError("solve_darcy1d: Picard iteration did not converge; residual " +
                       std::to_string(darcy1d_residual(s, u)));
}

double darcy1d_residual(std::span<const double> s, std::span<const double> u) {
    const auto nx = static_cast<std::int64_t>(u.size());
    const double h = 1.0 / static_cast<double>(nx + 1);
    const double inv_h2 = 1.0 / (h * h);
    std::vector<double> face;
    darcy_faces(u, face);
    double res = 0.0;
    for (std::int64_t i = 0; i < nx; ++i) {
        const double ul = i > 0 ? u[static_cast<std::size_t>(i - 1)] : 0.0;
        const double ur = i + 1 < nx ? u[static_cast<std::size_t>(i + 1)] : 0.0;
        const double ui = u[static_cast<std::size_t>(i)];
        const double lhs = -(face[static_cast<std::size_t>(i + 1)] * (ur - ui) -
                             face[static_cast<std::size_t>(i)] * (ui - ul)) * inv_h2;
        res = std::max(res, std::abs(lhs - s[static_cast<std::size_t>(i)]));
    }
    return res;
}

OperatorSampleView OperatorDataset::sample(std::int64_t i) const {
    const auto m = sensor_count();
    const auto q = query_count();
    return OperatorSampleView{
        std::span<const double>(inputs.data() + i * m, static_cast<std::size_t>(m)), queries,
        std::span<const double>(targets.data() + i * q, static_cast<std::size_t>(q))};
}

void OperatorDataset::validate_split() const {
    std::vector<char> seen(static_cast<std::size_t>(n_samples()), 0);
    for (auto i : train_idx) {
        if (i < 0 || i >= n_samples() || seen[static_cast<std::size_t>(i)])
            throw ConfigError("OperatorDataset: bad train split");
        seen[static_cast<std::size_t>(i)] = 1;
    }
    for (auto i : test_idx) {
        if (i < 0 || i >= n_samples() || seen[static_cast<std::size_t>(i)])
            throw ConfigError("OperatorDataset: train/test splits overlap");
        seen[static_cast<std::size_t>(i)] = 1;
    }
}

namespace {

// Solves one sample of the named problem; metadata carries the solver config.
std::vector<double> resolve_targets(const std::string& problem, const json& meta,
                                    std::span<const double> input) {
    if (problem == "burgers") {
        BurgersConfig c;
        c.nx = meta.at("nx").get<std::int64_t>();
        c.nt = meta.at("nt").get<std::int64_t>();
        c.nu = meta.at("nu").get<double>();
        c.t_final = meta.at("t_final").get<double>();
        return solve_burgers(input, c);
    }
    if (problem == "darcy1d") {
        return solve_darcy1d(input, static_cast<std::int64_t>(input.size()));
    }
    throw ConfigError("problem '" + problem + "' has no solver (external dataset?)");
}

void require_solver_backed(const OperatorDataset& ds, const char* op) {
    if (ds.problem != "burgers" && ds.problem != "darcy1d")
        throw ConfigError(std::string(op) + ": problem '" + ds.problem + "' has no solver");
    if (ds.stats.has_value())
        throw ConfigError(std::string(op) + ": dataset is normalized; transform raw data first");
}

// Runs fn(i) over samples in parallel, propagating the first failure with its
// sample index.
template <typename Fn>
void parallel_samples(std::int64_t n, Fn&& fn) {
    std::string first_error;
    std::int64_t first_idx = -1;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            fn(i);
        } catch (const std::exception& e) {
#pragma omp critical
            if (first_idx < 0 || i < first_idx) {
                first_idx = i;
                first_error = e.what();
            }
        }
    }
    if (first_idx >= 0)
        throw NumericError("sample " + std::to_string(first_idx) + ": " + first_error);
}

} // namespace

OperatorDataset make_operator_dataset(const OperatorDatasetConfig& cfg) {
    if (cfg.problem != "burgers" && cfg.problem != "darcy1d")
        throw ConfigError("make_operator_dataset: unknown problem '" + cfg.problem + "'");
    if (cfg.n_samples < 1) throw ConfigError("make_operator_dataset: n_samples must be >= 1");
    if (cfg.n_train + cfg.n_test > cfg.n_samples)
        throw ConfigError("make_operator_dataset: split exceeds n_samples");

    OperatorDataset ds;
    ds.problem = cfg.problem;
    const bool burgers = cfg.problem == "burgers";
    const double ell = cfg.grf_length_scale > 0.0 ? cfg.grf_length_scale : (burgers ? 0.1 : 0.2);

    std::int64_t m, q, d;
    std::vector<double> sensors;
    if (burgers) {
        m = cfg.burgers.nx;
        q = (cfg.burgers.nt + 1) * cfg.burgers.nx;
        d = 2;
        sensors.resize(static_cast<std::size_t>(m));
        for (std::int64_t i = 0; i < m; ++i)
            sensors[static_cast<std::size_t>(i)] = static_cast<double>(i) / static_cast<double>(m);
    } else {
        m = cfg.darcy.nx;
        q = cfg.darcy.nx;
        d = 1;
        sensors.resize(static_cast<std::size_t>(m));
        for (std::int64_t i = 0; i < m; ++i)
            sensors[static_cast<std::size_t>(i)] =
                static_cast<double>(i + 1) / static_cast<double>(m + 1);
    }

    GrfSampler grf(GrfConfig{m, ell, cfg.grf_variance}, sensors);

    ds.sensor_points = Tensor(Shape{m}, sensors);
    ds.inputs = Tensor(Shape{cfg.n_samples, m});
    ds.targets = Tensor(Shape{cfg.n_samples, q});
    ds.queries = Tensor(Shape{q, d});

    auto* qd = ds.queries.mutable_values().data();
    if (burgers) {
        for (std::int64_t j = 0; j <= cfg.burgers.nt; ++j)
            for (std::int64_t i = 0; i < cfg.burgers.nx; ++i) {
                const std::int64_t r = j * cfg.burgers.nx + i;
                qd[r * 2 + 0] = sensors[static_cast<std::size_t>(i)];
                qd[r * 2 + 1] = cfg.burgers.t_final * static_cast<double>(j) /
                                static_cast<double>(cfg.burgers.nt);
            }
    } else {
        for (std::int64_t i = 0; i < q; ++i) qd[i] = sensors[static_cast<std::size_t>(i)];
    }

    ds.metadata["problem"] = cfg.problem;
    ds.metadata["seed"] = cfg.seed;
    ds.metadata["grf_length_scale"] = ell;
    ds.metadata["grf_variance"] = cfg.grf_variance;
    ds.metadata["rng"] = SeededRng::kAlgorithm;
    if (burgers) {
        ds.metadata["nx"] = cfg.burgers.nx;
        ds.metadata["nt"] = cfg.burgers.nt;
        ds.metadata["nu"] = cfg.burgers.nu;
        ds.metadata["t_final"] = cfg.burgers.t_final;
        ds.metadata["grid"] = "periodic x_i = i/nx; queries span the full (x,t) output grid";
    } else {
        ds.metadata["nx"] = cfg.darcy.nx;
        ds.metadata["grid"] = "interior nodes x_i = (i+1)/(nx+1), zero Dirichlet ends";
    }

    auto* inputs = ds.inputs.mutable_values().data();
    auto* targets = ds.targets.mutable_values().data();
    const json meta = ds.metadata;
    parallel_samples(cfg.n_samples, [&](std::int64_t i) {
        auto draw = grf.sample(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        std::memcpy(inputs + i * m, draw.data(), static_cast<std::size_t>(m) * sizeof(double));
        auto sol = resolve_targets(cfg.problem, meta,
                                   std::span<const double>(draw.data(), draw.size()));
        std::memcpy(targets + i * q, sol.data(), static_cast<std::size_t>(q) * sizeof(double));
    });

    ds.train_idx.resize(static_cast<std::size_t>(cfg.n_train));
    ds.test_idx.resize(static_cast<std::size_t>(cfg.n_test));
    for (std::int64_t i = 0; i < cfg.n_train; ++i) ds.train_idx[static_cast<std::size_t>(i)] = i;
    for (std::int64_t i = 0; i < cfg.n_test; ++i)
        ds.test_idx[static_cast<std::size_t>(i)] = cfg.n_train + i;
    return ds;
}

OperatorDataset add_noise_resolve(const OperatorDataset& ds, double level, std::uint64_t seed) {
    if (level < 0.0) throw ConfigError("add_noise_resolve: negative noise level");
    OperatorDataset out = ds;
    out.inputs = ds.inputs.clone();
    out.targets = ds.targets.clone();
    if (level == 0.0) return out;
    require_solver_backed(ds, "add_noise_resolve");

    const auto n = ds.n_samples();
    const auto m = ds.sensor_count();
    const auto q = ds.query_count();
    auto* inputs = out.inputs.mutable_values().data();
    auto* targets = out.targets.mutable_values().data();
    const json meta = ds.metadata;
    const std::string problem = ds.problem;
    parallel_samples(n, [&](std::int64_t i) {
        SeededRng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
        std::span<double> row(inputs + i * m, static_cast<std::size_t>(m));
        const double mu = vec_mean(row);
        const double sd = vec_std(row, mu);
        const double noise_std = level * sd;
        for (auto& x : row) x += noise_std * rng.next_normal();
        auto sol = resolve_targets(problem, meta, row);
        std::memcpy(targets + i * q, sol.data(), static_cast<std::size_t>(q) * sizeof(double));
    });
    out.metadata["noise_level"] = level;
    out.metadata["noise_seed"] = seed;
    out.metadata["noise_convention"] = "std = level * per-sample std of input values";
    return out;
}

OperatorDataset scale_ood(const OperatorDataset& ds, double factor) {
    if (factor <= 0.0) throw ConfigError("scale_ood: factor must be > 0");
    OperatorDataset out = ds;
    out.inputs = ds.inputs.clone();
    out.targets = ds.targets.clone();
    if (factor == 1.0) return out;
    require_solver_backed(ds, "scale_ood");

    const auto n = ds.n_samples();
    const auto m = ds.sensor_count();
    const auto q = ds.query_count();
    auto* inputs = out.inputs.mutable_values().data();
    auto* targets = out.targets.mutable_values().data();
    const json meta = ds.metadata;
    const std::string problem = ds.problem;
    parallel_samples(n, [&](std::int64_t i) {
        std::span<double> row(inputs + i * m, static_cast<std::size_t>(m));
        for (auto& x : row) x *= factor;
        auto sol = resolve_targets(problem, meta, row);
        std::memcpy(targets + i * q, sol.data(), static_cast<std::size_t>(q) * sizeof(double));
    });
    out.metadata["ood_factor"] = factor;
    return out;
}

std::pair<OperatorDataset, NormStats> normalize_dataset(const OperatorDataset& ds) {
    if (ds.train_idx.empty()) throw ConfigError("normalize_dataset: empty train split");
    if (ds.stats.has_value()) throw ConfigError("normalize_dataset: already normalized");

    const auto m = ds.sensor_count();
    const auto q = ds.query_count();
    const auto d = ds.coord_dim();

    NormStats st;
    {
        std::vector<double> pool;
        pool.reserve(ds.train_idx.size() * static_cast<std::size_t>(m));
        for (auto i : ds.train_idx) {
            auto v = ds.sample(i).u_sensors;
            pool.insert(pool.end(), v.begin(), v.end());
        }
        st.in_mean = vec_mean(pool);
        st.in_std = vec_std(pool, st.in_mean);
        if (st.in_std == 0.0)
            throw ConfigError("normalize_dataset: inputs have zero variance; "
                              "exclude constant fields before normalizing");
    }
    {
        std::vector<double> pool;
        pool.reserve(ds.train_idx.size() * static_cast<std::size_t>(q));
        for (auto i : ds.train_idx) {
            auto v = ds.sample(i).targets;
            pool.insert(pool.end(), v.begin(), v.end());
        }
        st.t_mean = vec_mean(pool);
        st.t_std = vec_std(pool, st.t_mean);
        if (st.t_std == 0.0)
            throw ConfigError("normalize_dataset: targets have zero variance; "
                              "exclude constant fields before normalizing");
    }
    st.q_mean.assign(static_cast<std::size_t>(d), 0.0);
    st.q_std.assign(static_cast<std::size_t>(d), 0.0);
    for (std::int64_t c = 0; c < d; ++c) {
        std::vector<double> col(static_cast<std::size_t>(q));
        for (std::int64_t r = 0; r < q; ++r) col[static_cast<std::size_t>(r)] = ds.queries(r, c);
        const double mu = vec_mean(col);
        const double sd = vec_std(col, mu);
        if (sd == 0.0)
            throw ConfigError("normalize_dataset: query coordinate " + std::to_string(c) +
                              " is constant; exclude constant fields before normalizing");
        st.q_mean[static_cast<std::size_t>(c)] = mu;
        st.q_std[static_cast<std::size_t>(c)] = sd;
    }

    OperatorDataset out = ds;
    out.inputs = ds.inputs.clone();
    out.targets = ds.targets.clone();
    out.queries = ds.queries.clone();
    for (auto& x : out.inputs.mutable_values()) x = (x - st.in_mean) / st.in_std;
    for (auto& x : out.targets.mutable_values()) x = (x - st.t_mean) / st.t_std;
    auto qv = out.queries.mutable_values();
    for (std::int64_t r = 0; r < q; ++r)
        for (std::int64_t c = 0; c < d; ++c)
            qv[static_cast<std::size_t>(r * d + c)] =
                (qv[static_cast<std::size_t>(r * d + c)] - st.q_mean[static_cast<std::size_t>(c)]) /
                st.q_std[static_cast<std::size_t>(c)];
    out.stats = st;
    out.metadata["normalized"] = true;
    return {std::move(out), st};
}

void save_dataset(const OperatorDataset& ds, const std::filesystem::path& dir) {
    ArrayStore store;
    store.put("sensor_points", ds.sensor_points);
    store.put("u_sensors", ds.inputs);
    store.put("queries", ds.queries);
    store.put("targets", ds.targets);
    if (!ds.train_idx.empty())
        store.put_i64("train_idx", Shape{static_cast<std::int64_t>(ds.train_idx.size())}, ds.train_idx);
    if (!ds.test_idx.empty())
        store.put_i64("test_idx", Shape{static_cast<std::int64_t>(ds.test_idx.size())}, ds.test_idx);
    store.metadata = ds.metadata;
    store.metadata["problem"] = ds.problem;
    if (ds.stats) {
        store.metadata["norm_stats"] = {{"in_mean", ds.stats->in_mean},
                                        {"in_std", ds.stats->in_std},
                                        {"q_mean", ds.stats->q_mean},
                                        {"q_std", ds.stats->q_std},
                                        {"t_mean", ds.stats->t_mean},
                                        {"t_std", ds.stats->t_std}};
    }
    store.save(dir);
}

OperatorDataset load_dataset(const std::filesystem::path& dir) {
    ArrayStore store = ArrayStore::load(dir);
    OperatorDataset ds;
    ds.metadata = store.metadata;
    ds.problem = store.metadata.value("problem", std::string("external"));
    ds.sensor_points = store.tensor("sensor_points");
    ds.inputs = store.tensor("u_sensors");
    ds.queries = store.tensor("queries");
    ds.targets = store.tensor("targets");
    if (store.has("train_idx")) ds.train_idx = store.i64("train_idx");
    if (store.has("test_idx")) ds.test_idx = store.i64("test_idx");

    if (ds.inputs.rank() != 2 || ds.targets.rank() != 2 || ds.queries.rank() != 2)
        throw IoError("load_dataset: arrays have unexpected ranks");
    if (ds.targets.dim(0) != ds.inputs.dim(0) || ds.targets.dim(1) != ds.queries.dim(0))
        throw IoError("load_dataset: inputs/targets/queries shapes disagree");
    ds.validate_split();

    if (store.metadata.contains("norm_stats")) {
        const auto& ns = store.metadata["norm_stats"];
        NormStats st;
        st.in_mean = ns.at("in_mean").get<double>();
        st.in_std = ns.at("in_std").get<double>();
        st.q_mean = ns.at("q_mean").get<std::vector<double>>();
        st.q_std = ns.at("q_std").get<std::vector<double>>();
        st.t_mean = ns.at("t_mean").get<double>();
        st.t_std = ns.at("t_std").get<double>();
        ds.stats = st;
    }
    return ds;
}

} // namespace kanbench
