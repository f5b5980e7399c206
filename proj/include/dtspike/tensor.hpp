#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dtspike/error.hpp"

namespace dts {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad; // allocated lazily, same length as data
    bool requires_grad = false;
    uint64_t id = 0;    // creation order; tape nodes must have inputs.id < output.id
    std::string label;  // parameter or op name, used in diagnostics

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
    }
};

// Dense row-major float32 tensor. A cheap shared handle; the buffer is written
// once by its producing op and treated as immutable afterwards. Parameter
// buffers are the exception: the optimizer rewrites them between tapes.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, float value);
    static Tensor from(Shape shape, std::vector<float> values);
    static Tensor scalar(float value);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }
    int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }

    std::span<const float> values() const { return impl_->data; }
    std::span<float> values_mut() { return impl_->data; }
    float item() const;
    float at(std::initializer_list<int64_t> idx) const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        impl_->requires_grad = v;
        return *this;
    }
    // zeros if no gradient has been accumulated yet
    std::span<const float> grad() const;
    void zero_grad();

    const std::string& label() const { return impl_->label; }
    Tensor& set_label(std::string s) {
        impl_->label = std::move(s);
        return *this;
    }

    Tensor clone() const;

    std::shared_ptr<TensorImpl> impl() const { return impl_; }
    TensorImpl* raw() const { return impl_.get(); }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;
    friend Tensor make_tensor(Shape, std::vector<float>);
};

Tensor make_tensor(Shape shape, std::vector<float> values);

struct TapeNode {
    std::string op;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    std::function<void()> backward; // accumulates into the inputs' grads
};

// Reverse-mode tape. Ops record themselves on the active tape in execution
// order; backward() replays the rules in reverse, which is a valid topological
// order because every op's inputs predate its output.
class GradTape {
public:
    GradTape() = default;
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    static GradTape* current();

    // RAII activation; nests are not allowed
    struct Scope {
        explicit Scope(GradTape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;
    };

    void record(TapeNode node);
    void backward(const Tensor& root);

    size_t size() const { return nodes_.size(); }
    const std::vector<TapeNode>& nodes() const { return nodes_; }

    // diagnostic context picked up by record(), e.g. the layer being built
    void set_context(std::string ctx) { context_ = std::move(ctx); }
    const std::string& context() const { return context_; }

    // name of the first recorded output containing a non-finite value, empty if none
    std::string first_non_finite() const;

private:
    std::vector<TapeNode> nodes_;
    std::string context_;
};

// true when a tape is active and any input wants gradients
bool tracing(std::initializer_list<const Tensor*> inputs);

void accumulate_grad(const std::shared_ptr<TensorImpl>& t, const float* g, size_t n);

} // namespace dts
