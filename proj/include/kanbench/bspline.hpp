#pragma once

#include <cstdint>

#include "kanbench/tensor.hpp"

namespace kanbench {

/// Uniform B-spline grid of a KAN edge activation. The knot vector extends
/// `degree` spacings beyond each side of [lo, hi], giving intervals + degree
/// basis functions per scalar input. Inputs outside [lo, hi] fall onto the
/// extended knots and taper to zero instead of being clamped.
struct KanGrid {
    double lo = -1.0;
    double hi = 1.0;
    std::int64_t intervals = 5; // G
    std::int64_t degree = 3;    // spline order k

    std::int64_t basis_count() const { return intervals + degree; }
    double spacing() const { return (hi - lo) / static_cast<double>(intervals); }
    double knot(std::int64_t j) const {
        return lo + static_cast<double>(j - degree) * spacing();
    }

    void validate() const;

    bool operator==(const KanGrid&) const = default;
};

namespace kernels {

/// Basis values for n scalars: out[s * nb + j] = B_j(x[s]), nb = G + degree.
void bspline_bases(const double* x, std::int64_t n, const KanGrid& grid, double* out);

/// First derivatives dB_j/dx, same layout as bspline_bases.
void bspline_bases_deriv(const double* x, std::int64_t n, const KanGrid& grid, double* out);

namespace ref {
/// Textbook Cox-de Boor recursion, one basis at a time. Oracle for the tests.
double bspline_basis(const KanGrid& grid, std::int64_t j, std::int64_t degree, double x);
} // namespace ref

} // namespace kernels

/// Differentiable basis expansion: x[batch, in] -> [batch, in, G + degree].
Tensor bspline_bases(const Tensor& x, const KanGrid& grid);

} // namespace kanbench
