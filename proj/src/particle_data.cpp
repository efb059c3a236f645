#include "kanbench/particle_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "kanbench/dataset_io.hpp"
#include "kanbench/kernels.hpp"
#include "kanbench/rng.hpp"

namespace kanbench {

double SimConfig::damping_for_restitution(double e, double m_eff, double k_n) {
    if (e <= 0.0 || e > 1.0) throw ConfigError("restitution must be in (0, 1]");
    const double ln_e = std::log(e);
    return 2.0 * (-ln_e) * std::sqrt(m_eff * k_n / (std::numbers::pi * std::numbers::pi + ln_e * ln_e));
}

double SimConfig::resolved_normal_damping() const {
    if (normal_damping >= 0.0) return normal_damping;
    return damping_for_restitution(0.3, mass / 2.0, stiffness);
}

void SimConfig::validate() const {
    if (dt <= 0.0 || steps_per_frame < 1) throw ConfigError("SimConfig: bad time stepping");
    if (!(dt < 0.1 * std::sqrt(mass / stiffness)))
        throw ConfigError("SimConfig: dt must satisfy dt < 0.1 sqrt(m/k_n) = " +
                          std::to_string(0.1 * std::sqrt(mass / stiffness)));
    if (wall_restitution < 0.0 || wall_restitution > 1.0)
        throw ConfigError("SimConfig: wall restitution must be in [0, 1]");
    if (radius <= 0.0 || radius >= 0.5) throw ConfigError("SimConfig: bad particle radius");
    if (stiffness <= 0.0 || mass <= 0.0) throw ConfigError("SimConfig: bad stiffness/mass");
    if (tangent_damping < 0.0) throw ConfigError("SimConfig: negative tangential damping");
}

nlohmann::json SimConfig::to_json() const {
    return {{"dt", dt},
            {"steps_per_frame", steps_per_frame},
            {"gravity", gravity},
            {"radius", radius},
            {"stiffness", stiffness},
            {"normal_damping", resolved_normal_damping()},
            {"wall_restitution", wall_restitution},
            {"tangent_damping", tangent_damping},
            {"mass", mass}};
}

SimConfig SimConfig::from_json(const nlohmann::json& j) {
    SimConfig c;
    c.dt = j.at("dt").get<double>();
    c.steps_per_frame = j.at("steps_per_frame").get<std::int64_t>();
    c.gravity = j.at("gravity").get<double>();
    c.radius = j.at("radius").get<double>();
    c.stiffness = j.at("stiffness").get<double>();
    c.normal_damping = j.at("normal_damping").get<double>();
    c.wall_restitution = j.at("wall_restitution").get<double>();
    c.tangent_damping = j.at("tangent_damping").get<double>();
    c.mass = j.at("mass").get<double>();
    return c;
}

namespace {

// Uniform cell grid over the unit box; cells list particles in index order so
// force accumulation per particle is deterministic.
struct CellGrid {
    double cell;
    std::int64_t ncell;
    std::vector<std::int64_t> offsets;
    std::vector<std::int32_t> items;

    void build(std::span<const double> pos, std::int64_t n, double reach) {
        cell = reach;
        ncell = std::max<std::int64_t>(1, static_cast<std::int64_t>(1.0 / reach));
        const auto cells = ncell * ncell;
        offsets.assign(static_cast<std::size_t>(cells) + 1, 0);
        items.resize(static_cast<std::size_t>(n));
        auto cell_of = [&](std::int64_t i) {
            auto cx = static_cast<std::int64_t>(pos[static_cast<std::size_t>(2 * i)] * static_cast<double>(ncell));
            auto cy = static_cast<std::int64_t>(pos[static_cast<std::size_t>(2 * i + 1)] * static_cast<double>(ncell));
            cx = std::clamp<std::int64_t>(cx, 0, ncell - 1);
            cy = std::clamp<std::int64_t>(cy, 0, ncell - 1);
            return cy * ncell + cx;
        };
        for (std::int64_t i = 0; i < n; ++i) ++offsets[static_cast<std::size_t>(cell_of(i)) + 1];
        for (std::size_t c = 1; c < offsets.size(); ++c) offsets[c] += offsets[c - 1];
        std::vector<std::int64_t> cursor(offsets.begin(), offsets.end() - 1);
        for (std::int64_t i = 0; i < n; ++i)
            items[static_cast<std::size_t>(cursor[static_cast<std::size_t>(cell_of(i))]++)] =
                static_cast<std::int32_t>(i);
    }

    template <typename Fn>
    void for_neighbors(std::span<const double> pos, std::int64_t i, Fn&& fn) const {
        const double x = pos[static_cast<std::size_t>(2 * i)];
        const double y = pos[static_cast<std::size_t>(2 * i + 1)];
        auto cx = std::clamp<std::int64_t>(static_cast<std::int64_t>(x * static_cast<double>(ncell)), 0, ncell - 1);
        auto cy = std::clamp<std::int64_t>(static_cast<std::int64_t>(y * static_cast<double>(ncell)), 0, ncell - 1);
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
            const std::int64_t yy = cy + dy;
            if (yy < 0 || yy >= ncell) continue;
            for (std::int64_t dx = -1; dx <= 1; ++dx) {
                const std::int64_t xx = cx + dx;
                if (xx < 0 || xx >= ncell) continue;
                const auto c = static_cast<std::size_t>(yy * ncell + xx);
                for (std::int64_t p = offsets[c]; p < offsets[c + 1]; ++p) {
                    const auto j = items[static_cast<std::size_t>(p)];
                    if (j != i) fn(j);
                }
            }
        }
    }
};

struct SimState {
    std::vector<double> pos, vel, force;
};

void compute_forces(const SimConfig& cfg, const CellGrid& grid, SimState& st, std::int64_t n) {
    const double two_r = 2.0 * cfg.radius;
    const double c_n = cfg.resolved_normal_damping();
    const double c_wall =
        SimConfig::damping_for_restitution(std::max(cfg.wall_restitution, 1e-6), cfg.mass, cfg.stiffness);
    const double* pos = st.pos.data();
    const double* vel = st.vel.data();
    double* force = st.force.data();

#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        double fx = 0.0;
        double fy = -cfg.gravity * cfg.mass;
        const double xi = pos[2 * i], yi = pos[2 * i + 1];
        const double vxi = vel[2 * i], vyi = vel[2 * i + 1];

        grid.for_neighbors(std::span<const double>(pos, static_cast<std::size_t>(2 * n)), i,
                           [&](std::int32_t j) {
            const double dx = xi - pos[2 * j];
            const double dy = yi - pos[2 * j + 1];
            const double d2 = dx * dx + dy * dy;
            if (d2 >= two_r * two_r || d2 == 0.0) return;
            const double d = std::sqrt(d2);
            const double nx = dx / d, ny = dy / d;
            const double overlap = two_r - d;
            const double rvx = vxi - vel[2 * j];
            const double rvy = vyi - vel[2 * j + 1];
            const double vn = rvx * nx + rvy * ny;
            const double fn = std::max(0.0, cfg.stiffness * overlap - c_n * vn);
            fx += fn * nx - cfg.tangent_damping * (rvx - vn * nx);
            fy += fn * ny - cfg.tangent_damping * (rvy - vn * ny);
        });

        // Wall penalties, inward normals; dashpot active only in contact.
        const double r = cfg.radius;
        if (xi < r) fx += std::max(0.0, cfg.stiffness * (r - xi) - c_wall * vxi);
        if (xi > 1.0 - r) fx -= std::max(0.0, cfg.stiffness * (xi - (1.0 - r)) + c_wall * vxi);
        if (yi < r) fy += std::max(0.0, cfg.stiffness * (r - yi) - c_wall * vyi);
        if (yi > 1.0 - r) fy -= std::max(0.0, cfg.stiffness * (yi - (1.0 - r)) + c_wall * vyi);

        force[2 * i] = fx;
        force[2 * i + 1] = fy;
    }
}

} // namespace

Trajectory simulate_particles(const SimConfig& cfg, std::span<const double> pos0,
                              std::span<const double> vel0, std::int64_t n_steps) {
    cfg.validate();
    if (pos0.size() != vel0.size() || pos0.size() % 2 != 0)
        throw ShapeError("simulate_particles: positions/velocities must be [N,2]");
    const auto n = static_cast<std::int64_t>(pos0.size() / 2);
    for (std::int64_t i = 0; i < n; ++i) {
        const double x = pos0[static_cast<std::size_t>(2 * i)];
        const double y = pos0[static_cast<std::size_t>(2 * i + 1)];
        if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0)
            throw ConfigError("simulate_particles: initial positions must lie in the unit box");
    }

    Trajectory traj;
    traj.config = cfg;
    traj.positions = Tensor(Shape{n_steps + 1, n, 2});
    auto* out = traj.positions.mutable_values().data();
    std::memcpy(out, pos0.data(), pos0.size() * sizeof(double));

    SimState st;
    st.pos.assign(pos0.begin(), pos0.end());
    st.vel.assign(vel0.begin(), vel0.end());
    st.force.assign(static_cast<std::size_t>(2 * n), 0.0);

    CellGrid grid;
    const double inv_m = 1.0 / cfg.mass;
    for (std::int64_t frame = 1; frame <= n_steps; ++frame) {
        for (std::int64_t sub = 0; sub < cfg.steps_per_frame; ++sub) {
            grid.build(st.pos, n, 2.0 * cfg.radius);
            compute_forces(cfg, grid, st, n);
            for (std::int64_t i = 0; i < 2 * n; ++i) {
                st.vel[static_cast<std::size_t>(i)] += cfg.dt * st.force[static_cast<std::size_t>(i)] * inv_m;
                st.pos[static_cast<std::size_t>(i)] += cfg.dt * st.vel[static_cast<std::size_t>(i)];
                st.pos[static_cast<std::size_t>(i)] = std::clamp(st.pos[static_cast<std::size_t>(i)], 0.0, 1.0);
            }
        }
        if (!kernels::all_finite(st.pos.data(), 2 * n))
            throw NumericError("simulate_particles: non-finite state at frame " +
                               std::to_string(frame));
        std::memcpy(out + frame * 2 * n, st.pos.data(), static_cast<std::size_t>(2 * n) * sizeof(double));
    }
    return traj;
}

std::vector<std::pair<std::int32_t, std::int32_t>>
contact_pairs_grid(std::span<const double> pos, std::int64_t n, double reach) {
    CellGrid grid;
    grid.build(pos, n, reach);
    std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
    for (std::int64_t i = 0; i < n; ++i) {
        grid.for_neighbors(pos, i, [&](std::int32_t j) {
            if (j <= i) return;
            const double dx = pos[static_cast<std::size_t>(2 * i)] - pos[static_cast<std::size_t>(2 * j)];
            const double dy = pos[static_cast<std::size_t>(2 * i + 1)] - pos[static_cast<std::size_t>(2 * j + 1)];
            if (dx * dx + dy * dy < reach * reach)
                pairs.emplace_back(static_cast<std::int32_t>(i), j);
        });
    }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

std::vector<std::pair<std::int32_t, std::int32_t>>
contact_pairs_brute(std::span<const double> pos, std::int64_t n, double reach) {
    std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = i + 1; j < n; ++j) {
            const double dx = pos[static_cast<std::size_t>(2 * i)] - pos[static_cast<std::size_t>(2 * j)];
            const double dy = pos[static_cast<std::size_t>(2 * i + 1)] - pos[static_cast<std::size_t>(2 * j + 1)];
            if (dx * dx + dy * dy < reach * reach)
                pairs.emplace_back(static_cast<std::int32_t>(i), static_cast<std::int32_t>(j));
        }
    return pairs;
}

namespace {

struct Block {
    double x0, y0;          // lower-left particle center
    std::int64_t cols, rows;
    double spacing;
    double vx, vy;

    double width() const { return static_cast<double>(cols - 1) * spacing; }
    double height() const { return static_cast<double>(rows - 1) * spacing; }
};

bool blocks_overlap(const Block& a, const Block& b, double gap) {
    return !(a.x0 + a.width() + gap < b.x0 || b.x0 + b.width() + gap < a.x0 ||
             a.y0 + a.height() + gap < b.y0 || b.y0 + b.height() + gap < a.y0);
}

} // namespace

TrajectoryDataset make_trajectory_dataset(std::int64_t n_traj, std::int64_t n_particles,
                                          std::int64_t steps, std::uint64_t seed,
                                          const SimConfig& cfg, std::int64_t n_train,
                                          std::int64_t n_test) {
    cfg.validate();
    if (n_train + n_test > n_traj)
        throw ConfigError("make_trajectory_dataset: split exceeds trajectory count");

    TrajectoryDataset ds;
    ds.trajectories.resize(static_cast<std::size_t>(n_traj));
    const double spacing = 2.2 * cfg.radius;
    const double margin = 4.0 * cfg.radius;

    std::string first_error;
    std::int64_t first_idx = -1;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t t = 0; t < n_traj; ++t) {
        try {
            SeededRng rng(mix_seed(seed, static_cast<std::uint64_t>(t)));
            const int n_blocks = rng.next_uniform() < 0.5 ? 1 : 2;

            std::vector<Block> blocks;
            bool placed = false;
            for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
                blocks.clear();
                bool ok = true;
                for (int b = 0; b < n_blocks && ok; ++b) {
                    const std::int64_t count =
                        n_blocks == 1 ? n_particles
                                      : (b == 0 ? n_particles / 2 : n_particles - n_particles / 2);
                    Block blk;
                    blk.spacing = spacing;
                    blk.cols = std::max<std::int64_t>(1, static_cast<std::int64_t>(
                                   std::ceil(std::sqrt(static_cast<double>(count)))));
                    blk.rows = (count + blk.cols - 1) / blk.cols;
                    const double free_x = 1.0 - 2.0 * margin - blk.width();
                    const double free_y = 0.5 - margin - blk.height(); // keep blocks in the upper half
                    if (free_x <= 0.0 || free_y <= 0.0) {
                        ok = false;
                        break;
                    }
                    blk.x0 = margin + rng.next_uniform() * free_x;
                    blk.y0 = 0.5 + rng.next_uniform() * free_y;
                    blk.vx = rng.next_uniform(-0.5, 0.5);
                    blk.vy = rng.next_uniform(-0.5, 0.0);
                    for (const auto& other : blocks)
                        if (blocks_overlap(blk, other, 2.0 * spacing)) ok = false;
                    if (ok) blocks.push_back(blk);
                }
                placed = ok && static_cast<int>(blocks.size()) == n_blocks;
            }
            if (!placed)
                throw ConfigError("make_trajectory_dataset: block placement failed; "
                                  "too many particles for the box");

            std::vector<double> pos, vel;
            pos.reserve(static_cast<std::size_t>(2 * n_particles));
            vel.reserve(static_cast<std::size_t>(2 * n_particles));
            for (std::size_t b = 0; b < blocks.size(); ++b) {
                const auto& blk = blocks[b];
                const std::int64_t count =
                    blocks.size() == 1
                        ? n_particles
                        : (b == 0 ? n_particles / 2 : n_particles - n_particles / 2);
                for (std::int64_t p = 0; p < count; ++p) {
                    const std::int64_t cx = p % blk.cols;
                    const std::int64_t cy = p / blk.cols;
                    // Sub-spacing jitter breaks the grid symmetry; perfectly
                    // aligned columns would bounce with no lateral dynamics.
                    const double jx = rng.next_uniform(-0.02, 0.02) * blk.spacing;
                    const double jy = rng.next_uniform(-0.02, 0.02) * blk.spacing;
                    pos.push_back(blk.x0 + static_cast<double>(cx) * blk.spacing + jx);
                    pos.push_back(blk.y0 + static_cast<double>(cy) * blk.spacing + jy);
                    vel.push_back(blk.vx);
                    vel.push_back(blk.vy);
                }
            }
            ds.trajectories[static_cast<std::size_t>(t)] = simulate_particles(cfg, pos, vel, steps);
        } catch (const std::exception& e) {
#pragma omp critical
            if (first_idx < 0 || t < first_idx) {
                first_idx = t;
                first_error = e.what();
            }
        }
    }
    if (first_idx >= 0)
        throw ConfigError("trajectory " + std::to_string(first_idx) + ": " + first_error);

    for (std::int64_t i = 0; i < n_train; ++i) ds.train_idx.push_back(i);
    for (std::int64_t i = 0; i < n_test; ++i) ds.test_idx.push_back(n_train + i);
    ds.metadata["sim"] = cfg.to_json();
    ds.metadata["seed"] = seed;
    ds.metadata["n_particles"] = n_particles;
    ds.metadata["steps"] = steps;
    return ds;
}

EnergySeries compute_energies(const Trajectory& traj) {
    const auto t_count = traj.frames();
    const auto n = traj.particles();
    const double dt = traj.config.frame_dt();
    const double m = traj.config.mass;
    const double g = traj.config.gravity;
    const auto* p = traj.positions.data();

    auto frame_y_sum = [&](std::int64_t t) {
        double s = 0.0;
        for (std::int64_t i = 0; i < n; ++i) s += p[(t * n + i) * 2 + 1];
        return s;
    };
    const double pe0 = m * g * frame_y_sum(0);
    if (pe0 <= 0.0)
        throw NumericError("compute_energies: initial potential energy must be positive");

    EnergySeries es;
    es.kinetic.resize(static_cast<std::size_t>(t_count));
    es.potential.resize(static_cast<std::size_t>(t_count));
    for (std::int64_t t = 0; t < t_count; ++t) {
        const std::int64_t tp = std::min(t + 1, t_count - 1);
        const std::int64_t tm = std::max<std::int64_t>(t - 1, 0);
        const double denom = static_cast<double>(tp - tm) * dt;
        double ke = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double vx = (p[(tp * n + i) * 2] - p[(tm * n + i) * 2]) / denom;
            const double vy = (p[(tp * n + i) * 2 + 1] - p[(tm * n + i) * 2 + 1]) / denom;
            ke += 0.5 * m * (vx * vx + vy * vy);
        }
        es.kinetic[static_cast<std::size_t>(t)] = ke / pe0;
        es.potential[static_cast<std::size_t>(t)] = m * g * frame_y_sum(t) / pe0;
    }
    return es;
}

double critical_time(const Trajectory& traj) {
    const auto n = traj.particles();
    const auto* p = traj.positions.data();
    double h0 = 0.0;
    for (std::int64_t i = 0; i < n; ++i) h0 = std::max(h0, p[i * 2 + 1]);
    return std::sqrt(2.0 * h0 / traj.config.gravity);
}

void save_trajectories(const TrajectoryDataset& ds, const std::filesystem::path& dir) {
    if (ds.trajectories.empty()) throw ConfigError("save_trajectories: empty dataset");
    const auto t_count = ds.trajectories.front().frames();
    const auto n = ds.trajectories.front().particles();
    for (const auto& tr : ds.trajectories)
        if (tr.frames() != t_count || tr.particles() != n)
            throw ShapeError("save_trajectories: inconsistent trajectory shapes");

    ArrayStore store;
    std::vector<double> stacked;
    stacked.reserve(ds.trajectories.size() * static_cast<std::size_t>(t_count * n * 2));
    for (const auto& tr : ds.trajectories) {
        auto v = tr.positions.values();
        stacked.insert(stacked.end(), v.begin(), v.end());
    }
    store.put_f64("positions", Shape{ds.n_trajectories(), t_count, n, 2}, std::move(stacked));
    if (!ds.train_idx.empty())
        store.put_i64("train_idx", Shape{static_cast<std::int64_t>(ds.train_idx.size())}, ds.train_idx);
    if (!ds.test_idx.empty())
        store.put_i64("test_idx", Shape{static_cast<std::int64_t>(ds.test_idx.size())}, ds.test_idx);
    store.metadata = ds.metadata;
    store.metadata["kind"] = "trajectories";
    store.save(dir);
}

TrajectoryDataset load_trajectories(const std::filesystem::path& dir) {
    ArrayStore store = ArrayStore::load(dir);
    const auto& arr = store.at("positions");
    if (arr.shape.size() != 4 || arr.shape[3] != 2)
        throw IoError("load_trajectories: positions must be [R, T, N, 2]");
    const auto r = arr.shape[0], t_count = arr.shape[1], n = arr.shape[2];

    TrajectoryDataset ds;
    ds.metadata = store.metadata;
    SimConfig cfg = SimConfig::from_json(store.metadata.at("sim"));
    const auto frame_elems = static_cast<std::size_t>(t_count * n * 2);
    for (std::int64_t i = 0; i < r; ++i) {
        Trajectory tr;
        tr.config = cfg;
        tr.positions = Tensor(Shape{t_count, n, 2},
                              std::vector<double>(arr.f64.begin() + static_cast<std::ptrdiff_t>(i * frame_elems),
                                                  arr.f64.begin() + static_cast<std::ptrdiff_t>((i + 1) * frame_elems)));
        ds.trajectories.push_back(std::move(tr));
    }
    if (store.has("train_idx")) ds.train_idx = store.i64("train_idx");
    if (store.has("test_idx")) ds.test_idx = store.i64("test_idx");
    return ds;
}

} // namespace kanbench
