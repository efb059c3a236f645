#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "kanbench/tensor.hpp"

namespace kanbench {

// Differentiable operations. Each records a node on the active Tape when any
// input is tracked; without an active tape they are plain kernels.

/// A[m,k] x B[k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

/// X[b,i] x W[o,i]^T -> [b,o]; the affine core of every layer.
Tensor linear(const Tensor& x, const Tensor& w);

/// X[b,o] + bias[o] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

/// Elementwise x * sigmoid(x).
Tensor silu(const Tensor& x);

/// Full reduction to a scalar tensor of shape [1].
Tensor sum(const Tensor& x);

/// mean((a - b)^2) over all elements.
Tensor mse(const Tensor& a, const Tensor& b);

/// Same data viewed under a new shape (element count preserved).
Tensor reshape(const Tensor& x, Shape shape);

/// Columns [start, start+len) of a 2-D tensor.
Tensor slice_cols(const Tensor& x, std::int64_t start, std::int64_t len);

/// Horizontal concatenation of equal-row-count 2-D tensors.
Tensor concat_cols(const std::vector<Tensor>& parts);

/// Precomputed grouping of row indices by target, used by gather/segment ops
/// to keep accumulation order fixed (and thread-independent).
struct RowGroups {
    std::vector<std::int32_t> order;   // row ids sorted by (target, row id)
    std::vector<std::int64_t> offsets; // group g occupies [offsets[g], offsets[g+1])
    std::int64_t n_groups = 0;

    static RowGroups build(const std::vector<std::int32_t>& target, std::int64_t n_groups);
};

/// out[r,:] = x[idx[r],:]. `groups` must be RowGroups::build(idx, x.rows).
Tensor gather_rows(const Tensor& x, const std::vector<std::int32_t>& idx,
                   const RowGroups& groups);

/// out[s,:] = sum over rows r with seg[r]==s of x[r,:].
/// `groups` must be RowGroups::build(seg, n_segments).
Tensor segment_sum(const Tensor& x, const std::vector<std::int32_t>& seg,
                   const RowGroups& groups);

/// Independent central-difference gradient oracle: never touches the tape.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h);

} // namespace kanbench
