// Timing harness comparing the OpenMP kernels against the serial reference
// implementations. Run with varying OMP_NUM_THREADS to see scaling.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "kanbench/bspline.hpp"
#include "kanbench/graph_sim.hpp"
#include "kanbench/kernels.hpp"
#include "kanbench/layers.hpp"
#include "kanbench/rng.hpp"
#include "kanbench/tensor_ops.hpp"

using namespace kanbench;
namespace kk = kanbench::kernels;

namespace {

double time_seconds(const std::function<void()>& fn, int reps) {
    fn(); // warm up
    const auto start = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() /
           static_cast<double>(reps);
}

void report(const std::string& name, double flops, double t_kernel, double t_ref) {
    std::printf("%-28s %8.2f ms  %7.2f GF/s   ref %8.2f ms  speedup %5.2fx\n", name.c_str(),
                t_kernel * 1e3, flops / t_kernel * 1e-9, t_ref * 1e3, t_ref / t_kernel);
}

} // namespace

int main() {
#if defined(_OPENMP)
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (no OpenMP)\n");
#endif

    {
        const std::int64_t m = 256, n = 1000, k = 1000;
        Tensor a = Tensor::randn({m, k}, 1);
        Tensor b = Tensor::randn({n, k}, 2);
        Tensor c({m, n});
        Tensor cr({m, n});
        const double flops = 2.0 * static_cast<double>(m * n * k);
        const double t = time_seconds(
            [&] { kk::gemm_nt_acc(a.data(), b.data(), c.mutable_values().data(), m, n, k); }, 10);
        const double tr = time_seconds(
            [&] { kk::ref::gemm_nt_acc(a.data(), b.data(), cr.mutable_values().data(), m, n, k); },
            2);
        report("gemm_nt 256x1000x1000", flops, t, tr);
    }
    {
        const std::int64_t m = 256, n = 1000, k = 1000;
        Tensor a = Tensor::randn({m, k}, 1);
        Tensor b = Tensor::randn({k, n}, 2);
        Tensor c({m, n});
        Tensor cr({m, n});
        const double flops = 2.0 * static_cast<double>(m * n * k);
        const double t = time_seconds(
            [&] { kk::gemm_nn_acc(a.data(), b.data(), c.mutable_values().data(), m, n, k); }, 10);
        const double tr = time_seconds(
            [&] { kk::ref::gemm_nn_acc(a.data(), b.data(), cr.mutable_values().data(), m, n, k); },
            2);
        report("gemm_nn 256x1000x1000", flops, t, tr);
    }
    {
        const std::int64_t p = 1000, q = 1000, m = 256;
        Tensor a = Tensor::randn({m, p}, 1);
        Tensor b = Tensor::randn({m, q}, 2);
        Tensor c({p, q});
        Tensor cr({p, q});
        const double flops = 2.0 * static_cast<double>(p * q * m);
        const double t = time_seconds(
            [&] { kk::gemm_tn_acc(a.data(), b.data(), c.mutable_values().data(), p, q, m); }, 10);
        const double tr = time_seconds(
            [&] { kk::ref::gemm_tn_acc(a.data(), b.data(), cr.mutable_values().data(), p, q, m); },
            2);
        report("gemm_tn 1000x1000x256", flops, t, tr);
    }
    {
        const std::int64_t batch = 4096, in = 101;
        const KanGrid grid{-1.0, 1.0, 5, 3};
        Tensor x = Tensor::uniform({batch, in}, 3, -1.2, 1.2);
        std::vector<double> out(static_cast<std::size_t>(batch * in * grid.basis_count()));
        // One Cox-de Boor sweep costs roughly degree * (G + 2k) fused ops per scalar.
        const double flops = 4.0 * static_cast<double>(grid.degree * (grid.intervals + 2 * grid.degree)) *
                             static_cast<double>(batch * in);
        const double t = time_seconds(
            [&] { kernels::bspline_bases(x.data(), batch * in, grid, out.data()); }, 20);
        std::vector<double> ref_out(out.size());
        const double tr = time_seconds(
            [&] {
                for (std::int64_t s = 0; s < batch * in; ++s)
                    for (std::int64_t j = 0; j < grid.basis_count(); ++j)
                        ref_out[static_cast<std::size_t>(s * grid.basis_count() + j)] =
                            kernels::ref::bspline_basis(grid, j, grid.degree, x.data()[s]);
            },
            2);
        report("bspline_bases 4096x101 G5k3", flops, t, tr);
    }
    {
        // One KAN layer forward at training shapes.
        NetworkSpec spec;
        spec.kind = LayerKind::kan;
        spec.widths = {101, 203};
        spec.grid = KanGrid{-1.0, 1.0, 5, 3};
        Network net = init_network(spec, 7);
        Tensor x = Tensor::uniform({32, 101}, 5, -1.0, 1.0);
        const double flops = 2.0 * 32.0 * 101.0 * 203.0 * (1.0 + 8.0);
        const double t =
            time_seconds([&] { (void)network_forward(net, x); }, 50);
        std::printf("%-28s %8.2f ms  %7.2f GF/s\n", "kan_layer 32x101->203", t * 1e3,
                    flops / t * 1e-9);
    }
    {
        // Message-passing round at GNS scale.
        const std::int64_t n = 200, e = 1200, d = 32;
        Tensor v = Tensor::randn({n, d}, 1);
        Tensor msg = Tensor::randn({e, d}, 2);
        std::vector<std::int32_t> recv(static_cast<std::size_t>(e));
        SeededRng rng(3);
        for (auto& r : recv)
            r = static_cast<std::int32_t>(rng.next_uniform() * static_cast<double>(n));
        auto groups = RowGroups::build(recv, n);
        const double t = time_seconds([&] { (void)segment_sum(msg, recv, groups); }, 200);
        std::printf("%-28s %8.3f ms\n", "segment_sum 1200x32", t * 1e3);
        (void)v;
    }
    return 0;
}
