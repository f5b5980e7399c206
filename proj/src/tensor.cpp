#include "dtspike/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace dts {

namespace {
std::atomic<uint64_t> g_next_id{1};
thread_local GradTape* g_active_tape = nullptr;

std::shared_ptr<TensorImpl> new_impl(Shape shape, std::vector<float> values) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return impl;
}
} // namespace

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

Tensor make_tensor(Shape shape, std::vector<float> values) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
        throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
    for (int64_t d : shape)
        if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(shape));
    return Tensor(new_impl(std::move(shape), std::move(values)));
}

Tensor Tensor::zeros(Shape shape) {
    auto n = shape_numel(shape);
    return make_tensor(std::move(shape), std::vector<float>(static_cast<size_t>(n), 0.0f));
}

Tensor Tensor::full(Shape shape, float value) {
    auto n = shape_numel(shape);
    return make_tensor(std::move(shape), std::vector<float>(static_cast<size_t>(n), value));
}

Tensor Tensor::from(Shape shape, std::vector<float> values) {
    return make_tensor(std::move(shape), std::move(values));
}

Tensor Tensor::scalar(float value) { return make_tensor({1}, {value}); }

float Tensor::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

float Tensor::at(std::initializer_list<int64_t> idx) const {
    const Shape& s = impl_->shape;
    if (idx.size() != s.size())
        throw DimensionError("index rank mismatch for shape " + shape_str(s));
    int64_t off = 0;
    size_t k = 0;
    for (int64_t i : idx) {
        if (i < 0 || i >= s[k]) throw IndexError("index out of range");
        off = off * s[k] + i;
        ++k;
    }
    return impl_->data[static_cast<size_t>(off)];
}

std::span<const float> Tensor::grad() const {
    impl_->ensure_grad();
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

Tensor Tensor::clone() const {
    Tensor t = make_tensor(impl_->shape, impl_->data);
    t.impl_->label = impl_->label;
    return t;
}

GradTape* GradTape::current() { return g_active_tape; }

GradTape::Scope::Scope(GradTape& tape) {
    if (g_active_tape) throw InvariantError("nested GradTape scopes are not supported");
    g_active_tape = &tape;
}

GradTape::Scope::~Scope() { g_active_tape = nullptr; }

void GradTape::record(TapeNode node) {
    for (const auto& in : node.inputs)
        if (in->id >= node.output->id)
            throw InvariantError("tape cycle: op '" + node.op + "' output would be its own ancestor");
    if (node.op.empty()) node.op = "?";
    if (!context_.empty()) node.op = context_ + ":" + node.op;
    nodes_.push_back(std::move(node));
}

void GradTape::backward(const Tensor& root) {
    auto r = root.impl();
    r->ensure_grad();
    if (r->data.size() != 1)
        throw DimensionError("backward() root must be scalar, got " + shape_str(r->shape));
    r->grad[0] = 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        // nodes the root never reached have no output gradient and contribute nothing
        if (it->output->grad.empty()) continue;
        if (it->backward) it->backward();
    }
}

std::string GradTape::first_non_finite() const {
    for (const auto& n : nodes_) {
        for (float v : n.output->data) {
            if (!std::isfinite(v)) return n.op;
        }
    }
    return {};
}

bool tracing(std::initializer_list<const Tensor*> inputs) {
    if (!g_active_tape) return false;
    for (const Tensor* t : inputs)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

void accumulate_grad(const std::shared_ptr<TensorImpl>& t, const float* g, size_t n) {
    if (!t->requires_grad) return;
    t->ensure_grad();
    for (size_t i = 0; i < n; ++i) t->grad[i] += g[i];
}

} // namespace dts
