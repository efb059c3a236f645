#include "kanbench/tensor_ops.hpp"

#include <algorithm>
#include <cstring>

#include "kanbench/kernels.hpp"

namespace kanbench {

namespace {

namespace kk = kernels;

struct OpCtx {
    Tape* tape = nullptr;
    std::vector<std::int64_t> inputs;
    bool tracked = false;
};

OpCtx begin_op(std::initializer_list<const Tensor*> ins) {
    OpCtx ctx;
    Tape* tape = Tape::current();
    if (!tape || tape->consumed()) return ctx;
    for (const Tensor* t : ins) {
        std::int64_t node = -1;
        if (t->tape_gen == tape->generation() && t->tape_node >= 0)
            node = t->tape_node;
        else if (t->requires_grad())
            node = tape->track_leaf(*t);
        ctx.inputs.push_back(node);
        if (node >= 0) ctx.tracked = true;
    }
    if (ctx.tracked) ctx.tape = tape;
    return ctx;
}

void require_rank(const Tensor& t, int rank, const char* op) {
    if (t.rank() != rank)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
    Tensor out(Shape{m, n});
    kk::gemm_nn_acc(a.data(), b.data(), out.mutable_values().data(), m, n, k);

    if (auto ctx = begin_op({&a, &b}); ctx.tape) {
        ctx.tape->track_result(out, std::move(ctx.inputs),
            [a, b, m, n, k](const double* g, GradAccess& ga) {
                if (ga.wants(0)) kk::gemm_nt_acc(g, b.data(), ga.grad_in(0), m, k, n);
                if (ga.wants(1)) kk::gemm_tn_acc(a.data(), g, ga.grad_in(1), k, n, m);
            });
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w) {
    require_rank(x, 2, "linear");
    require_rank(w, 2, "linear");
    const auto m = x.dim(0), k = x.dim(1), o = w.dim(0);
    if (w.dim(1) != k)
        throw ShapeError("linear: input width " + shape_str(x.shape()) +
                         " does not match weight " + shape_str(w.shape()));
    Tensor out(Shape{m, o});
    kk::gemm_nt_acc(x.data(), w.data(), out.mutable_values().data(), m, o, k);

    if (auto ctx = begin_op({&x, &w}); ctx.tape) {
        ctx.tape->track_result(out, std::move(ctx.inputs),
            [x, w, m, k, o](const double* g, GradAccess& ga) {
                if (ga.wants(0)) kk::gemm_nn_acc(g, w.data(), ga.grad_in(0), m, k, o);
                if (ga.wants(1)) kk::gemm_tn_acc(g, x.data(), ga.grad_in(1), o, k, m);
            });
    }
    return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    require_rank(x, 2, "add_bias");
    require_rank(bias, 1, "add_bias");
    const auto m = x.dim(0), n = x.dim(1);
    if (bias.dim(0) != n)
        throw ShapeError("add_bias: bias " + shape_str(bias.shape()) +
                         " does not match " + shape_str(x.shape()));
    Tensor out(Shape{m, n});
    auto* y = out.mutable_values().data();
    const auto* xd = x.data();
    const auto* bd = bias.data();
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) y[i * n + j] = xd[i * n + j] + bd[j];

    if (auto ctx = begin_op({&x, &bias}); ctx.tape) {
        ctx.tape->track_result(out, std::move(ctx.inputs),
            [m, n](const double* g, GradAccess& ga) {
                if (ga.wants(0)) kk::axpy(g, 1.0, ga.grad_in(0), m * n);
                if (ga.wants(1)) {
                    double* db = ga.grad_in(1);
                    for (std::int64_t i = 0; i < m; ++i)
                        for (std::int64_t j = 0; j < n; ++j) db[j] += g[i * n + j];
                }
            });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    kk::add(a.data(), b.data(), out.mutable_values().data(), a.numel());
    if (auto ctx = begin_op({&a, &b}); ctx.tape) {
        const auto n = a.numel();
        ctx.tape->track_result(out, std::move(ctx.inputs),
            [n](const double* g, GradAccess& ga) {
                if (ga.wants(0)) kk::axpy(g, 1.0, ga.grad_in(0), n);
                if (ga.wants(1)) kk::axpy(g, 1.0, ga.grad_in(1), n);
            });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    kk::sub(a.data(), b.data(), out.mutable_values().data(), a.numel());
    if (auto ctx = begin_op({&a, &b}); ctx.tape) {
        const auto n = a.numel();
        ctx.tape->track_result(out, std::move(ctx.inputs),
            [n](const double* g, GradAccess& ga) {
                if (ga.wants(0)) kk::axpy(g, 1.0, ga.grad_in(0), n);
                if (ga.wants(1)) kk::axpy(g, -1.0, ga.grad_in(1), n);
            });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a.shape());
    kk::mul(a.data(), b.data(), out.mutable_values().data(), a.numel());
    if (auto ctx = begin_op({&a, &b}); ctx.tape) {
        const auto n = a.numel();
        ctx.tape->track_result(out, std::move(ctx.inputs),
            [a, b, n](const double* g, GradAccess& ga) {
                if (ga.wants(0)) {
                    double* da = ga.grad_in(0);
                    const double* bd = b.data();
                    for (std::int64_t i = 0; i < n; ++i) da[i] += g[i] * bd[i];
                }
                if (ga.wants(1)) {
                    double* db = ga.grad_in(1);
                    const double* ad = a.data();
                    for (std::int64_t i = 0; i < n; ++i) db[i] += g[i] * ad[i];
                }
            });
    }
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out(a.shape());
    kk::scale(a.data(), c, out.mutable_values().data(), a.numel());
    if (auto ctx = begin_op({&a}); ctx.tape) {
        const auto n = a.numel();
        ctx.tape->track_result(out, std::move(ctx.inputs),
            [c, n](const double* g, GradAccess& ga) {
                if (ga.wants(0)) kk::axpy(g, c, ga.grad_in(0), n);
            });
    }
    return out;
}

Tensor silu(const Tensor& x) {
    Tensor out(x.shape());
    kk::silu(x.data(), out.mutable_values().data(), x.numel());
    if (auto ctx = begin_op({&x}); ctx.tape) {
        const auto n = x.numel();
        ctx.tape->track_result(out, std::move(ctx.inputs),
            [x, n](const double* g, GradAccess& ga) {
                if (ga.wants(0)) kk::silu_grad_acc(x.data(), g, ga.grad_in(0), n);
            });
    }
    return out;
}

Tensor sum(const Tensor& x) {
    Tensor out = Tensor::scalar(kk::sum(x.data(), x.numel()));
    if (auto ctx = begin_op({&x}); ctx.tape) {
        const auto n = x.numel();
        ctx.tape->track_result(out, std::move(ctx.inputs),
            [n](const double* g, GradAccess& ga) {
                if (ga.wants(0)) {
                    double* dx = ga.grad_in(0);
                    for (std::int64_t i = 0; i < n; ++i) dx[i] += g[0];
                }
            });
    }
    return out;
}

Tensor mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    Tensor d = sub(a, b);
    return scale(sum(mul(d, d)), 1.0 / static_cast<double>(a.numel()));
}

Tensor reshape(const Tensor& x, Shape shape) {
    Tensor out = x.reshaped(std::move(shape));
    if (auto ctx = begin_op({&x}); ctx.tape) {
        const auto n = x.numel();
        ctx.tape->track_result(out, std::move(ctx.inputs),
            [n](const double* g, GradAccess& ga) {
                if (ga.wants(0)) kk::axpy(g, 1.0, ga.grad_in(0), n);
            });
    }
    return out;
}

Tensor slice_cols(const Tensor& x, std::int64_t start, std::int64_t len) {
    require_rank(x, 2, "slice_cols");
    const auto m = x.dim(0), n = x.dim(1);
    if (start < 0 || len < 1 || start + len > n)
        throw ShapeError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of range for " +
                         shape_str(x.shape()));
    Tensor out(Shape{m, len});
    auto* y = out.mutable_values().data();
    const auto* xd = x.data();
    for (std::int64_t i = 0; i < m; ++i)
        std::memcpy(y + i * len, xd + i * n + start, static_cast<std::size_t>(len) * sizeof(double));

    if (auto ctx = begin_op({&x}); ctx.tape) {
        ctx.tape->track_result(out, std::move(ctx.inputs),
            [m, n, start, len](const double* g, GradAccess& ga) {
                if (!ga.wants(0)) return;
                double* dx = ga.grad_in(0);
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t j = 0; j < len; ++j)
                        dx[i * n + start + j] += g[i * len + j];
            });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const auto m = parts[0].dim(0);
    std::int64_t total = 0;
    for (const auto& p : parts) {
        require_rank(p, 2, "concat_cols");
        if (p.dim(0) != m)
            throw ShapeError("concat_cols: row counts disagree, " + shape_str(parts[0].shape()) +
                             " vs " + shape_str(p.shape()));
        total += p.dim(1);
    }
    Tensor out(Shape{m, total});
    auto* y = out.mutable_values().data();
    std::int64_t col = 0;
    for (const auto& p : parts) {
        const auto w = p.dim(1);
        const auto* pd = p.data();
        for (std::int64_t i = 0; i < m; ++i)
            std::memcpy(y + i * total + col, pd + i * w, static_cast<std::size_t>(w) * sizeof(double));
        col += w;
    }

    std::vector<const Tensor*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    Tape* tape = Tape::current();
    if (tape && !tape->consumed()) {
        std::vector<std::int64_t> inputs;
        bool tracked = false;
        for (const Tensor* t : ptrs) {
            std::int64_t node = -1;
            if (t->tape_gen == tape->generation() && t->tape_node >= 0)
                node = t->tape_node;
            else if (t->requires_grad())
                node = tape->track_leaf(*t);
            inputs.push_back(node);
            tracked = tracked || node >= 0;
        }
        if (tracked) {
            std::vector<std::int64_t> widths;
            for (const auto& p : parts) widths.push_back(p.dim(1));
            tape->track_result(out, std::move(inputs),
                [m, total, widths](const double* g, GradAccess& ga) {
                    std::int64_t col = 0;
                    for (std::size_t s = 0; s < widths.size(); ++s) {
                        const auto w = widths[s];
                        if (ga.wants(static_cast<int>(s))) {
                            double* dp = ga.grad_in(static_cast<int>(s));
                            for (std::int64_t i = 0; i < m; ++i)
                                for (std::int64_t j = 0; j < w; ++j)
                                    dp[i * w + j] += g[i * total + col + j];
                        }
                        col += w;
                    }
                });
        }
    }
    return out;
}

RowGroups RowGroups::build(const std::vector<std::int32_t>& target, std::int64_t n_groups) {
    RowGroups rg;
    rg.n_groups = n_groups;
    rg.offsets.assign(static_cast<std::size_t>(n_groups) + 1, 0);
    for (auto t : target) ++rg.offsets[static_cast<std::size_t>(t) + 1];
    for (std::int64_t g = 0; g < n_groups; ++g)
        rg.offsets[static_cast<std::size_t>(g) + 1] += rg.offsets[static_cast<std::size_t>(g)];
    rg.order.resize(target.size());
    std::vector<std::int64_t> cursor(rg.offsets.begin(), rg.offsets.end() - 1);
    for (std::size_t r = 0; r < target.size(); ++r)
        rg.order[static_cast<std::size_t>(cursor[static_cast<std::size_t>(target[r])]++)] =
            static_cast<std::int32_t>(r);
    return rg;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::int32_t>& idx,
                   const RowGroups& groups) {
    require_rank(x, 2, "gather_rows");
    const auto f = x.dim(1);
    const auto e = static_cast<std::int64_t>(idx.size());
    Tensor out(Shape{e, f});
    auto* y = out.mutable_values().data();
    const auto* xd = x.data();
#pragma omp parallel for schedule(static) if (e * f > 16384)
    for (std::int64_t r = 0; r < e; ++r)
        std::memcpy(y + r * f, xd + static_cast<std::int64_t>(idx[static_cast<std::size_t>(r)]) * f,
                    static_cast<std::size_t>(f) * sizeof(double));

    if (auto ctx = begin_op({&x}); ctx.tape) {
        ctx.tape->track_result(out, std::move(ctx.inputs),
            [f, groups](const double* g, GradAccess& ga) {
                if (!ga.wants(0)) return;
                double* dx = ga.grad_in(0);
                const auto n_groups = groups.n_groups;
#pragma omp parallel for schedule(static) if (n_groups * f > 16384)
                for (std::int64_t t = 0; t < n_groups; ++t) {
                    double* row = dx + t * f;
                    for (std::int64_t p = groups.offsets[static_cast<std::size_t>(t)];
                         p < groups.offsets[static_cast<std::size_t>(t) + 1]; ++p) {
                        const double* src =
                            g + static_cast<std::int64_t>(groups.order[static_cast<std::size_t>(p)]) * f;
                        for (std::int64_t j = 0; j < f; ++j) row[j] += src[j];
                    }
                }
            });
    }
    return out;
}

Tensor segment_sum(const Tensor& x, const std::vector<std::int32_t>& seg,
                   const RowGroups& groups) {
    require_rank(x, 2, "segment_sum");
    if (seg.size() != static_cast<std::size_t>(x.dim(0)))
        throw ShapeError("segment_sum: segment list length " + std::to_string(seg.size()) +
                         " vs rows " + shape_str(x.shape()));
    const auto f = x.dim(1);
    const auto s = groups.n_groups;
    Tensor out(Shape{s, f});
    auto* y = out.mutable_values().data();
    const auto* xd = x.data();
#pragma omp parallel for schedule(static) if (s * f > 16384)
    for (std::int64_t t = 0; t < s; ++t) {
        double* row = y + t * f;
        for (std::int64_t p = groups.offsets[static_cast<std::size_t>(t)];
             p < groups.offsets[static_cast<std::size_t>(t) + 1]; ++p) {
            const double* src =
                xd + static_cast<std::int64_t>(groups.order[static_cast<std::size_t>(p)]) * f;
            for (std::int64_t j = 0; j < f; ++j) row[j] += src[j];
        }
    }

    if (auto ctx = begin_op({&x}); ctx.tape) {
        const auto e = x.dim(0);
        ctx.tape->track_result(out, std::move(ctx.inputs),
            [f, e, seg](const double* g, GradAccess& ga) {
                if (!ga.wants(0)) return;
                double* dx = ga.grad_in(0);
#pragma omp parallel for schedule(static) if (e * f > 16384)
                for (std::int64_t r = 0; r < e; ++r) {
                    const double* src = g + static_cast<std::int64_t>(seg[static_cast<std::size_t>(r)]) * f;
                    for (std::int64_t j = 0; j < f; ++j) dx[r * f + j] += src[j];
                }
            });
    }
    return out;
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h) {
    if (h <= 0) throw ConfigError("finite_difference_gradient: h must be positive");
    TapePause pause;
    Tensor grad(x.shape());
    auto g = grad.mutable_values();
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        Tensor hi = x.clone();
        Tensor lo = x.clone();
        hi.mutable_values()[static_cast<std::size_t>(i)] += h;
        lo.mutable_values()[static_cast<std::size_t>(i)] -= h;
        g[static_cast<std::size_t>(i)] = (f(hi) - f(lo)) / (2.0 * h);
    }
    return grad;
}

} // namespace kanbench
