#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <omp.h>

#include "kanbench/bspline.hpp"
#include "kanbench/kernels.hpp"
#include "kanbench/rng.hpp"
#include "kanbench/tensor.hpp"

using namespace kanbench;
namespace kk = kanbench::kernels;

namespace {

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST_CASE("gemm kernels match the serial reference") {
    SeededRng shapes(99);
    for (int trial = 0; trial < 8; ++trial) {
        const auto m = 1 + static_cast<std::int64_t>(shapes.next_uniform() * 40);
        const auto n = 1 + static_cast<std::int64_t>(shapes.next_uniform() * 40);
        const auto k = 1 + static_cast<std::int64_t>(shapes.next_uniform() * 40);
        Tensor a = Tensor::randn({m, k}, 100 + trial);
        Tensor bt = Tensor::randn({n, k}, 200 + trial);
        Tensor b = Tensor::randn({k, n}, 300 + trial);

        Tensor c1({m, n}), c2({m, n});
        kk::gemm_nt_acc(a.data(), bt.data(), c1.mutable_values().data(), m, n, k);
        kk::ref::gemm_nt_acc(a.data(), bt.data(), c2.mutable_values().data(), m, n, k);
        CHECK(max_abs_diff(c1.values(), c2.values()) < 1e-12);

        Tensor d1({m, n}), d2({m, n});
        kk::gemm_nn_acc(a.data(), b.data(), d1.mutable_values().data(), m, n, k);
        kk::ref::gemm_nn_acc(a.data(), b.data(), d2.mutable_values().data(), m, n, k);
        CHECK(max_abs_diff(d1.values(), d2.values()) < 1e-12);

        Tensor am = Tensor::randn({k, m}, 400 + trial);
        Tensor bm = Tensor::randn({k, n}, 500 + trial);
        Tensor e1({m, n}), e2({m, n});
        kk::gemm_tn_acc(am.data(), bm.data(), e1.mutable_values().data(), m, n, k);
        kk::ref::gemm_tn_acc(am.data(), bm.data(), e2.mutable_values().data(), m, n, k);
        CHECK(max_abs_diff(e1.values(), e2.values()) < 1e-12);
    }
}

TEST_CASE("kernels are bitwise independent of the thread count") {
    const std::int64_t m = 37, n = 53, k = 61;
    Tensor a = Tensor::randn({m, k}, 1);
    Tensor b = Tensor::randn({n, k}, 2);

    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    Tensor c1({m, n});
    kk::gemm_nt_acc(a.data(), b.data(), c1.mutable_values().data(), m, n, k);
    const double s1 = kk::sum(c1.data(), c1.numel());

    omp_set_num_threads(std::max(2, saved));
    Tensor c2({m, n});
    kk::gemm_nt_acc(a.data(), b.data(), c2.mutable_values().data(), m, n, k);
    const double s2 = kk::sum(c2.data(), c2.numel());
    omp_set_num_threads(saved);

    CHECK(std::memcmp(c1.data(), c2.data(), static_cast<std::size_t>(m * n) * 8) == 0);
    CHECK(s1 == s2);
}

TEST_CASE("blocked sum matches reference and silu matches formula") {
    Tensor x = Tensor::randn({10007}, 5);
    const double a = kk::sum(x.data(), x.numel());
    const double b = kk::ref::sum(x.data(), x.numel());
    CHECK(a == doctest::Approx(b).epsilon(1e-13));

    Tensor y(x.shape());
    kk::silu(x.data(), y.mutable_values().data(), x.numel());
    for (std::int64_t i = 0; i < 32; ++i) {
        const double xi = x.values()[static_cast<std::size_t>(i)];
        CHECK(y.values()[static_cast<std::size_t>(i)] ==
              doctest::Approx(xi / (1.0 + std::exp(-xi))).epsilon(1e-15));
    }
}

TEST_CASE("vectorized bspline evaluation matches the textbook recursion") {
    for (const auto& [g, k] : std::vector<std::pair<std::int64_t, std::int64_t>>{
             {5, 3}, {20, 3}, {2, 0}, {4, 2}}) {
        const KanGrid grid{-1.0, 1.0, g, k};
        const auto nb = grid.basis_count();
        Tensor x = Tensor::uniform({257, 1}, 7 + g, -1.6, 1.6);
        std::vector<double> fast(static_cast<std::size_t>(x.numel() * nb));
        kk::bspline_bases(x.data(), x.numel(), grid, fast.data());
        for (std::int64_t s = 0; s < x.numel(); ++s)
            for (std::int64_t j = 0; j < nb; ++j) {
                const double want = kk::ref::bspline_basis(grid, j, k, x.data()[s]);
                CHECK(fast[static_cast<std::size_t>(s * nb + j)] ==
                      doctest::Approx(want).epsilon(1e-12));
            }
    }
}

TEST_CASE("bspline derivative matches central differences") {
    const KanGrid grid{-1.0, 1.0, 6, 3};
    const auto nb = grid.basis_count();
    Tensor x = Tensor::uniform({64, 1}, 11, -0.95, 0.95);
    std::vector<double> deriv(static_cast<std::size_t>(x.numel() * nb));
    kk::bspline_bases_deriv(x.data(), x.numel(), grid, deriv.data());
    const double h = 1e-6;
    for (std::int64_t s = 0; s < x.numel(); ++s)
        for (std::int64_t j = 0; j < nb; ++j) {
            const double hi = kk::ref::bspline_basis(grid, j, 3, x.data()[s] + h);
            const double lo = kk::ref::bspline_basis(grid, j, 3, x.data()[s] - h);
            CHECK(deriv[static_cast<std::size_t>(s * nb + j)] ==
                  doctest::Approx((hi - lo) / (2.0 * h)).epsilon(1e-5));
        }
}
