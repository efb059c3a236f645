#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "kanbench/particle_data.hpp"
#include "kanbench/rng.hpp"

using namespace kanbench;

TEST_CASE("sim config stability invariant") {
    SimConfig cfg;
    cfg.validate(); // defaults satisfy dt < 0.1 sqrt(m/k_n)
    SimConfig bad = cfg;
    bad.dt = 2.5e-3; // violates the contact-resolution bound for k_n = 5e4
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    SimConfig bad_e = cfg;
    bad_e.wall_restitution = 1.5;
    CHECK_THROWS_AS(bad_e.validate(), ConfigError);
}

TEST_CASE("ballistic free fall matches the analytic solution") {
    SimConfig cfg;
    cfg.steps_per_frame = 1; // store every substep
    const double y0 = 0.8;
    std::vector<double> pos{0.5, y0}, vel{0.0, 0.0};
    auto traj = simulate_particles(cfg, pos, vel, 100);
    const auto* p = traj.positions.data();
    for (std::int64_t t = 1; t <= 100; ++t) {
        const double time = static_cast<double>(t) * cfg.dt;
        const double want = y0 - 0.5 * cfg.gravity * time * time;
        const double got = p[(t * 1 + 0) * 2 + 1];
        CHECK(std::abs(got - want) / std::abs(want) < 1e-3);
        CHECK(p[t * 2] == 0.5); // no horizontal force
    }
}

TEST_CASE("particles stay inside the box for ten thousand substeps") {
    SimConfig cfg;
    cfg.steps_per_frame = 10;
    // 4x4 block dropped from mid-height with a sideways kick.
    std::vector<double> pos, vel;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            pos.push_back(0.4 + 0.033 * i);
            pos.push_back(0.5 + 0.033 * j);
            vel.push_back(0.8);
            vel.push_back(-0.4);
        }
    auto traj = simulate_particles(cfg, pos, vel, 1000); // 10^4 substeps
    for (auto v : traj.positions.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("head-on symmetric collision keeps the center of mass fixed") {
    SimConfig cfg;
    std::vector<double> pos{0.40, 0.5, 0.60, 0.5};
    std::vector<double> vel{0.5, 0.0, -0.5, 0.0};
    auto traj = simulate_particles(cfg, pos, vel, 200);
    const auto* p = traj.positions.data();
    bool touched = false;
    for (std::int64_t t = 0; t <= 200; ++t) {
        const double com_x = 0.5 * (p[(t * 2 + 0) * 2] + p[(t * 2 + 1) * 2]);
        CHECK(std::abs(com_x - 0.5) < 1e-10);
        const double gap = std::abs(p[(t * 2 + 1) * 2] - p[(t * 2 + 0) * 2]);
        if (gap < 2.0 * cfg.radius) touched = true;
    }
    CHECK(touched); // the collision actually happened
}

TEST_CASE("internal forces cancel: horizontal momentum is conserved mid-air") {
    SimConfig cfg;
    cfg.steps_per_frame = 1;
    // Two particles colliding far from every wall, gravity acts on y only.
    std::vector<double> pos{0.45, 0.7, 0.52, 0.7};
    std::vector<double> vel{0.3, 0.0, -0.2, 0.0};
    auto traj = simulate_particles(cfg, pos, vel, 120);
    const auto* p = traj.positions.data();
    // Sum of x displacements per frame is proportional to total x momentum.
    const double first = (p[(1 * 2 + 0) * 2] - p[(0 * 2 + 0) * 2]) +
                         (p[(1 * 2 + 1) * 2] - p[(0 * 2 + 1) * 2]);
    for (std::int64_t t = 1; t <= 120; ++t) {
        const double dx = (p[(t * 2 + 0) * 2] - p[((t - 1) * 2 + 0) * 2]) +
                          (p[(t * 2 + 1) * 2] - p[((t - 1) * 2 + 1) * 2]);
        CHECK(std::abs(dx - first) < 1e-10);
    }
}

TEST_CASE("trajectory dataset: shapes, determinism, block placement") {
    SimConfig cfg;
    auto ds = make_trajectory_dataset(4, 50, 30, 11, cfg, 3, 1);
    CHECK(ds.n_trajectories() == 4);
    for (const auto& tr : ds.trajectories) {
        CHECK(tr.frames() == 31);
        CHECK(tr.particles() == 50);
    }
    CHECK(ds.train_idx.size() == 3);
    CHECK(ds.test_idx.size() == 1);

    auto ds2 = make_trajectory_dataset(4, 50, 30, 11, cfg, 3, 1);
    for (std::size_t t = 0; t < 4; ++t)
        CHECK(std::memcmp(ds.trajectories[t].positions.data(), ds2.trajectories[t].positions.data(),
                          static_cast<std::size_t>(ds.trajectories[t].positions.numel()) * 8) == 0);

    // Initial frames: particles start in the upper half, none overlapping.
    for (const auto& tr : ds.trajectories) {
        const auto* p = tr.positions.data();
        const auto n = tr.particles();
        for (std::int64_t i = 0; i < n; ++i) {
            CHECK(p[i * 2 + 1] >= 0.45);
            for (std::int64_t j = i + 1; j < n; ++j) {
                const double dx = p[i * 2] - p[j * 2];
                const double dy = p[i * 2 + 1] - p[j * 2 + 1];
                CHECK(std::sqrt(dx * dx + dy * dy) >= 2.0 * cfg.radius);
            }
        }
    }

    CHECK_THROWS_AS(make_trajectory_dataset(2, 50, 10, 1, cfg, 2, 1), ConfigError);
    // Too many particles to place.
    CHECK_THROWS_AS(make_trajectory_dataset(1, 100000, 1, 1, cfg, 1, 0), ConfigError);
}

TEST_CASE("energies: normalization, static case, ballistic conservation") {
    SimConfig cfg;
    // Hand-built static trajectory.
    Trajectory still;
    still.config = cfg;
    still.positions = Tensor(Shape{10, 3, 2}, 0.0);
    auto v = still.positions.mutable_values();
    for (std::int64_t t = 0; t < 10; ++t)
        for (std::int64_t i = 0; i < 3; ++i) {
            v[static_cast<std::size_t>((t * 3 + i) * 2)] = 0.2 * static_cast<double>(i + 1);
            v[static_cast<std::size_t>((t * 3 + i) * 2 + 1)] = 0.6;
        }
    auto es = compute_energies(still);
    CHECK(es.potential[0] == 1.0);
    for (auto k : es.kinetic) CHECK(k == 0.0);
    for (auto pe : es.potential) CHECK(pe == doctest::Approx(1.0).epsilon(1e-14));

    // Single ballistic particle: total normalized energy stays within 2%.
    SimConfig ball;
    ball.steps_per_frame = 4;
    auto traj = simulate_particles(ball, std::vector<double>{0.5, 0.9},
                                   std::vector<double>{0.0, 0.0}, 250);
    auto be = compute_energies(traj);
    for (std::size_t t = 0; t < be.kinetic.size(); ++t) {
        const double total = be.kinetic[t] + be.potential[t];
        CHECK(std::abs(total - 1.0) < 0.02);
    }
}

TEST_CASE("critical time uses the initial column height") {
    SimConfig cfg;
    Trajectory tr;
    tr.config = cfg;
    tr.positions = Tensor(Shape{2, 2, 2}, {0.1, 0.3, 0.2, 0.72, 0.1, 0.3, 0.2, 0.72});
    CHECK(critical_time(tr) == doctest::Approx(std::sqrt(2.0 * 0.72 / cfg.gravity)).epsilon(1e-12));
}

TEST_CASE("cell-grid pair search equals brute force") {
    SeededRng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        const std::int64_t n = 100;
        std::vector<double> pos(static_cast<std::size_t>(2 * n));
        for (auto& x : pos) x = rng.next_uniform();
        const double reach = 0.03 + 0.02 * trial;
        auto a = contact_pairs_grid(pos, n, reach);
        auto b = contact_pairs_brute(pos, n, reach);
        CHECK(a == b);
    }
}

TEST_CASE("trajectory dataset save/load round-trips bitwise") {
    const auto dir = std::filesystem::temp_directory_path() / "kanbench_test_traj_io";
    std::filesystem::remove_all(dir);
    SimConfig cfg;
    auto ds = make_trajectory_dataset(3, 20, 10, 3, cfg, 2, 1);
    save_trajectories(ds, dir);
    auto loaded = load_trajectories(dir);
    CHECK(loaded.n_trajectories() == 3);
    CHECK(loaded.train_idx == ds.train_idx);
    for (std::size_t t = 0; t < 3; ++t)
        CHECK(std::memcmp(loaded.trajectories[t].positions.data(),
                          ds.trajectories[t].positions.data(),
                          static_cast<std::size_t>(ds.trajectories[t].positions.numel()) * 8) == 0);
    CHECK(loaded.trajectories[0].config.frame_dt() == cfg.frame_dt());
    std::filesystem::remove_all(dir);
}
