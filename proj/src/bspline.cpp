#include "kanbench/bspline.hpp"

#include <vector>

#include "kanbench/kernels.hpp"

namespace kanbench {

void KanGrid::validate() const {
    if (intervals < 1)
        throw ConfigError("KanGrid: intervals must be >= 1, got " + std::to_string(intervals));
    if (degree < 0)
        throw ConfigError("KanGrid: degree must be >= 0, got " + std::to_string(degree));
    if (!(lo < hi))
        throw ConfigError("KanGrid: range must satisfy lo < hi");
}

namespace kernels {

namespace {

// Vectorised Cox-de Boor over the extended knot vector. `w` has room for
// G + 2k entries; after the sweep w[0 .. G+k) holds the degree-k bases.
inline void eval_levels(const KanGrid& g, double x, double* w, std::int64_t upto_degree) {
    const std::int64_t n0 = g.intervals + 2 * g.degree; // degree-0 slots
    const double h = g.spacing();
    const double t_last = g.knot(n0);
    for (std::int64_t j = 0; j < n0; ++j) {
        const double tj = g.knot(j);
        const double tj1 = g.knot(j + 1);
        const bool inside = (x >= tj && x < tj1) || (j == n0 - 1 && x == t_last);
        w[j] = inside ? 1.0 : 0.0;
    }
    for (std::int64_t d = 1; d <= upto_degree; ++d) {
        const double denom = static_cast<double>(d) * h;
        for (std::int64_t j = 0; j < n0 - d; ++j) {
            const double left = (x - g.knot(j)) / denom;
            const double right = (g.knot(j + d + 1) - x) / denom;
            w[j] = left * w[j] + right * w[j + 1];
        }
    }
}

} // namespace

void bspline_bases(const double* x, std::int64_t n, const KanGrid& grid, double* out) {
    grid.validate();
    const std::int64_t nb = grid.basis_count();
    const std::int64_t scratch = grid.intervals + 2 * grid.degree;
#pragma omp parallel if (n * nb > 8192)
    {
        std::vector<double> w(static_cast<std::size_t>(scratch));
#pragma omp for schedule(static)
        for (std::int64_t s = 0; s < n; ++s) {
            eval_levels(grid, x[s], w.data(), grid.degree);
            for (std::int64_t j = 0; j < nb; ++j) out[s * nb + j] = w[static_cast<std::size_t>(j)];
        }
    }
}

void bspline_bases_deriv(const double* x, std::int64_t n, const KanGrid& grid, double* out) {
    grid.validate();
    const std::int64_t nb = grid.basis_count();
    const std::int64_t scratch = grid.intervals + 2 * grid.degree;
    const double h = grid.spacing();
#pragma omp parallel if (n * nb > 8192)
    {
        std::vector<double> w(static_cast<std::size_t>(scratch));
#pragma omp for schedule(static)
        for (std::int64_t s = 0; s < n; ++s) {
            if (grid.degree == 0) {
                for (std::int64_t j = 0; j < nb; ++j) out[s * nb + j] = 0.0;
                continue;
            }
            eval_levels(grid, x[s], w.data(), grid.degree - 1);
            // dB_{j,k}/dx = (B_{j,k-1} - B_{j+1,k-1}) / h on a uniform grid.
            for (std::int64_t j = 0; j < nb; ++j)
                out[s * nb + j] =
                    (w[static_cast<std::size_t>(j)] - w[static_cast<std::size_t>(j + 1)]) / h;
        }
    }
}

namespace ref {

double bspline_basis(const KanGrid& grid, std::int64_t j, std::int64_t degree, double x) {
    const std::int64_t n0 = grid.intervals + 2 * grid.degree;
    if (degree == 0) {
        const double tj = grid.knot(j);
        const double tj1 = grid.knot(j + 1);
        const double t_last = grid.knot(n0);
        return (x >= tj && x < tj1) || (j == n0 - 1 && x == t_last) ? 1.0 : 0.0;
    }
    const double tj = grid.knot(j);
    const double a = (x - tj) / (grid.knot(j + degree) - tj);
    const double b = (grid.knot(j + degree + 1) - x) / (grid.knot(j + degree + 1) - grid.knot(j + 1));
    return a * bspline_basis(grid, j, degree - 1, x) + b * bspline_basis(grid, j + 1, degree - 1, x);
}

} // namespace ref

} // namespace kernels

Tensor bspline_bases(const Tensor& x, const KanGrid& grid) {
    if (x.rank() != 2)
        throw ShapeError("bspline_bases: expected [batch, in], got " + shape_str(x.shape()));
    grid.validate();
    const auto batch = x.dim(0), in = x.dim(1);
    const auto nb = grid.basis_count();
    Tensor out(Shape{batch, in, nb});
    kernels::bspline_bases(x.data(), batch * in, grid, out.mutable_values().data());

    Tape* tape = Tape::current();
    if (tape && !tape->consumed()) {
        std::int64_t node = -1;
        if (x.tape_gen == tape->generation() && x.tape_node >= 0)
            node = x.tape_node;
        else if (x.requires_grad())
            node = tape->track_leaf(x);
        if (node >= 0) {
            tape->track_result(out, {node}, [x, grid, nb](const double* g, GradAccess& ga) {
                if (!ga.wants(0)) return;
                const auto n = x.numel();
                std::vector<double> deriv(static_cast<std::size_t>(n * nb));
                kernels::bspline_bases_deriv(x.data(), n, grid, deriv.data());
                double* dx = ga.grad_in(0);
#pragma omp parallel for schedule(static) if (n * nb > 16384)
                for (std::int64_t s = 0; s < n; ++s) {
                    double acc = 0.0;
                    for (std::int64_t j = 0; j < nb; ++j) acc += g[s * nb + j] * deriv[static_cast<std::size_t>(s * nb + j)];
                    dx[s] += acc;
                }
            });
        }
    }
    return out;
}

} // namespace kanbench
