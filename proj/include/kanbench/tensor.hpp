#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kanbench/errors.hpp"

namespace kanbench {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

/// Dense row-major tensor of 64-bit floats. Values are shared copy-on-never:
/// tensors are treated as immutable after construction except by the single
/// owner of a training loop (Adam updates go through mutable_values()).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor scalar(double v);

    /// i.i.d. Normal(0, stddev^2) draws from the project generator.
    static Tensor randn(const Shape& shape, std::uint64_t seed, double stddev = 1.0);

    /// i.i.d. Uniform[lo, hi) draws.
    static Tensor uniform(const Shape& shape, std::uint64_t seed, double lo, double hi);

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return numel_; }
    bool defined() const { return static_cast<bool>(data_); }

    std::span<const double> values() const { return {data_->data(), data_->size()}; }
    const double* data() const { return data_->data(); }

    /// Writable view for the single owning thread (optimizer updates).
    std::span<double> mutable_values() { return {data_->data(), data_->size()}; }

    double value() const; // scalar tensors only
    double operator()(std::int64_t i) const { return (*data_)[static_cast<std::size_t>(i)]; }
    double operator()(std::int64_t i, std::int64_t j) const {
        return (*data_)[static_cast<std::size_t>(i * shape_[1] + j)];
    }

    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool v) { requires_grad_ = v; }

    /// Identity of the underlying buffer; leaves are tracked by this key.
    const void* key() const { return static_cast<const void*>(data_.get()); }

    /// Deep copy with its own buffer.
    Tensor clone() const;

    /// View of the same buffer under a new shape (element count preserved).
    Tensor reshaped(Shape shape) const;

    // Managed by the op layer; a node is only meaningful while the tape that
    // assigned it is active and unconsumed.
    std::int64_t tape_node = -1;
    std::uint64_t tape_gen = 0;

private:
    Shape shape_;
    std::int64_t numel_ = 0;
    std::shared_ptr<std::vector<double>> data_;
    bool requires_grad_ = false;
};

/// Gradients of a consumed DiffRecord, keyed by leaf buffer identity.
class GradientMap {
public:
    /// Gradient of `loss` w.r.t. `leaf` (same shape as the leaf); exact zeros
    /// if the loss did not depend on it.
    Tensor get(const Tensor& leaf) const;
    bool contains(const Tensor& leaf) const;
    std::size_t size() const { return grads_.size(); }

    /// Flat gradient data for `leaf`, or nullptr if the loss did not touch it.
    const double* find(const Tensor& leaf) const;

    void insert(const void* key, std::vector<double> grad);

private:
    std::unordered_map<const void*, std::vector<double>> grads_;
};

/// Allocates / fetches gradient buffers for the inputs of a node during the
/// backward sweep.
class GradAccess {
public:
    /// True when input slot `slot` is tracked and needs its gradient.
    bool wants(int slot) const { return inputs_[static_cast<std::size_t>(slot)] >= 0; }

    /// Gradient accumulation buffer for input slot `slot` (zero-initialised).
    double* grad_in(int slot);

    GradAccess(class Tape& tape, const std::vector<std::int64_t>& inputs);

private:
    Tape& tape_;
    const std::vector<std::int64_t>& inputs_;
};

using BackwardFn = std::function<void(const double* grad_out, GradAccess& ga)>;

/// Reverse-mode differentiation record. Creating a Tape makes it the active
/// record for the current thread; the destructor restores the previous one.
/// A record is confined to one thread and is consumed by backward().
class Tape {
public:
    Tape();
    ~Tape();

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* current();

    std::uint64_t generation() const { return gen_; }
    bool consumed() const { return consumed_; }
    std::size_t node_count() const { return nodes_.size(); }

    /// Register (idempotently) a grad-flagged tensor as a leaf node.
    std::int64_t track_leaf(const Tensor& t);

    /// Register an op result. `inputs` are node ids (already registered).
    void track_result(Tensor& out, std::vector<std::int64_t> inputs, BackwardFn fn);

    friend GradientMap backward(const Tensor& loss);
    friend class GradAccess;

private:
    struct NodeRec {
        std::int64_t numel = 0;
        std::vector<std::int64_t> inputs;
        BackwardFn fn;            // empty for leaves
        const void* leaf_key = nullptr;
    };

    std::vector<NodeRec> nodes_;
    std::unordered_map<const void*, std::int64_t> leaves_;
    std::vector<std::vector<double>> grads_;
    std::uint64_t gen_ = 0;
    bool consumed_ = false;
    Tape* prev_ = nullptr;
};

/// Reverse sweep from a scalar loss through the active record. Returns the
/// gradient of every grad-flagged leaf and consumes the record.
GradientMap backward(const Tensor& loss);

/// Suspends the active record for the current scope (evaluation passes,
/// finite-difference probes).
class TapePause {
public:
    TapePause();
    ~TapePause();
    TapePause(const TapePause&) = delete;
    TapePause& operator=(const TapePause&) = delete;

private:
    Tape* saved_;
};

} // namespace kanbench
