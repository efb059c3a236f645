#include "kanbench/tensor.hpp"

#include <atomic>
#include <sstream>

#include "kanbench/rng.hpp"

namespace kanbench {

namespace {

thread_local Tape* t_current_tape = nullptr;
std::atomic<std::uint64_t> g_tape_gen{1};

void check_shape(const Shape& s) {
    if (s.empty()) throw ShapeError("invalid shape: empty extent list");
    for (auto e : s)
        if (e < 1) throw ShapeError("invalid shape: non-positive extent in " + shape_str(s));
}

} // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : shape_(std::move(shape)), requires_grad_(requires_grad) {
    check_shape(shape_);
    numel_ = shape_numel(shape_);
    data_ = std::make_shared<std::vector<double>>(static_cast<std::size_t>(numel_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : shape_(std::move(shape)), requires_grad_(requires_grad) {
    check_shape(shape_);
    numel_ = shape_numel(shape_);
    if (numel_ != static_cast<std::int64_t>(values.size()))
        throw ShapeError("value count " + std::to_string(values.size()) +
                         " does not fill shape " + shape_str(shape_));
    data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

Tensor Tensor::randn(const Shape& shape, std::uint64_t seed, double stddev) {
    if (stddev < 0) throw ConfigError("randn: negative standard deviation");
    Tensor t(shape);
    SeededRng rng(seed);
    auto v = t.mutable_values();
    for (auto& x : v) x = rng.next_normal() * stddev;
    return t;
}

Tensor Tensor::uniform(const Shape& shape, std::uint64_t seed, double lo, double hi) {
    Tensor t(shape);
    SeededRng rng(seed);
    auto v = t.mutable_values();
    for (auto& x : v) x = rng.next_uniform(lo, hi);
    return t;
}

double Tensor::value() const {
    if (numel_ != 1)
        throw ShapeError("value() requires a scalar, got shape " + shape_str(shape_));
    return (*data_)[0];
}

Tensor Tensor::clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.numel_ = numel_;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    t.requires_grad_ = requires_grad_;
    return t;
}

Tensor Tensor::reshaped(Shape shape) const {
    check_shape(shape);
    if (shape_numel(shape) != numel_)
        throw ShapeError("reshape: " + shape_str(shape_) + " has " + std::to_string(numel_) +
                         " elements, target " + shape_str(shape) + " disagrees");
    Tensor t;
    t.shape_ = std::move(shape);
    t.numel_ = numel_;
    t.data_ = data_;
    t.requires_grad_ = requires_grad_;
    return t;
}

Tensor GradientMap::get(const Tensor& leaf) const {
    auto it = grads_.find(leaf.key());
    if (it != grads_.end()) return Tensor(leaf.shape(), it->second);
    return Tensor(leaf.shape(), 0.0);
}

bool GradientMap::contains(const Tensor& leaf) const {
    return grads_.find(leaf.key()) != grads_.end();
}

const double* GradientMap::find(const Tensor& leaf) const {
    auto it = grads_.find(leaf.key());
    return it == grads_.end() ? nullptr : it->second.data();
}

void GradientMap::insert(const void* key, std::vector<double> grad) {
    grads_[key] = std::move(grad);
}

GradAccess::GradAccess(Tape& tape, const std::vector<std::int64_t>& inputs)
    : tape_(tape), inputs_(inputs) {}

double* GradAccess::grad_in(int slot) {
    const std::int64_t node = inputs_[static_cast<std::size_t>(slot)];
    auto& buf = tape_.grads_[static_cast<std::size_t>(node)];
    if (buf.empty())
        buf.assign(static_cast<std::size_t>(tape_.nodes_[static_cast<std::size_t>(node)].numel), 0.0);
    return buf.data();
}

Tape::Tape() : gen_(g_tape_gen.fetch_add(1)) {
    prev_ = t_current_tape;
    t_current_tape = this;
}

Tape::~Tape() { t_current_tape = prev_; }

Tape* Tape::current() { return t_current_tape; }

std::int64_t Tape::track_leaf(const Tensor& t) {
    auto it = leaves_.find(t.key());
    if (it != leaves_.end()) return it->second;
    const auto id = static_cast<std::int64_t>(nodes_.size());
    nodes_.push_back(NodeRec{t.numel(), {}, BackwardFn{}, t.key()});
    leaves_.emplace(t.key(), id);
    return id;
}

void Tape::track_result(Tensor& out, std::vector<std::int64_t> inputs, BackwardFn fn) {
    const auto id = static_cast<std::int64_t>(nodes_.size());
    nodes_.push_back(NodeRec{out.numel(), std::move(inputs), std::move(fn), nullptr});
    out.tape_node = id;
    out.tape_gen = gen_;
}

GradientMap backward(const Tensor& loss) {
    Tape* tape = Tape::current();
    if (!tape) throw TapeError("backward: no active differentiation record");
    if (tape->consumed_) throw TapeError("backward: record already consumed");
    if (loss.numel() != 1)
        throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    if (loss.tape_gen != tape->generation() || loss.tape_node < 0)
        throw TapeError("backward: loss is detached from the active record");

    auto& nodes = tape->nodes_;
    auto& grads = tape->grads_;
    grads.assign(nodes.size(), {});
    grads[static_cast<std::size_t>(loss.tape_node)] = {1.0};

    GradientMap out;
    for (std::int64_t i = loss.tape_node; i >= 0; --i) {
        auto& g = grads[static_cast<std::size_t>(i)];
        if (g.empty()) continue;
        auto& node = nodes[static_cast<std::size_t>(i)];
        if (node.leaf_key) {
            out.insert(node.leaf_key, std::move(g));
        } else if (node.fn) {
            GradAccess ga(*tape, node.inputs);
            node.fn(g.data(), ga);
        }
        g.clear();
        g.shrink_to_fit();
    }

    tape->nodes_.clear();
    tape->leaves_.clear();
    tape->grads_.clear();
    tape->consumed_ = true;
    return out;
}

TapePause::TapePause() : saved_(t_current_tape) { t_current_tape = nullptr; }

TapePause::~TapePause() { t_current_tape = saved_; }

} // namespace kanbench
