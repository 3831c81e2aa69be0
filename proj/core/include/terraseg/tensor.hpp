#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "terraseg/errors.hpp"

namespace terraseg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ")";
    return os.str();
}

// ---- Grad mode --------------------------------------------------------------

namespace detail {
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

/// RAII guard that disables graph recording (inference / finite differences).
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// ---- Tensor -----------------------------------------------------------------

template <class T>
struct TensorImpl {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
    // Distributes this node's grad to its inputs. Receives *this so the
    // closure never has to hold a reference to its own node.
    std::function<void(TensorImpl<T>&)> backward_step;

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), T(0));
    }
};

/// Dense row-major n-dimensional array with an optional gradient buffer.
/// Copying a Tensor copies the handle, not the storage.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() : impl_(std::make_shared<TensorImpl<T>>()) {}
    explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }

    static Tensor full(Shape shape, T fill) {
        auto impl = std::make_shared<TensorImpl<T>>();
        impl->values.assign(shape_numel(shape), fill);
        impl->shape = std::move(shape);
        return Tensor(std::move(impl));
    }

    static Tensor from_data(Shape shape, std::vector<T> values) {
        if (values.size() != shape_numel(shape)) {
            throw DimensionError("tensor data length " + std::to_string(values.size()) +
                                 " does not match shape " + shape_str(shape));
        }
        auto impl = std::make_shared<TensorImpl<T>>();
        impl->shape = std::move(shape);
        impl->values = std::move(values);
        return Tensor(std::move(impl));
    }

    static Tensor scalar(T v) { return from_data({1}, {v}); }

    // -- structure --
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
    std::size_t numel() const { return impl_->values.size(); }

    // -- values --
    const std::vector<T>& values() const { return impl_->values; }
    std::vector<T>& values_mut() { return impl_->values; }
    T item() const {
        if (numel() != 1) throw UsageError("item() requires a 1-element tensor, got " + shape_str(shape()));
        return impl_->values[0];
    }
    bool all_finite() const {
        for (T v : impl_->values)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    // -- autograd --
    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        impl_->requires_grad = b;
        return *this;
    }
    const std::vector<T>& grad() const {
        if (impl_->grad.empty()) throw UsageError("gradient not populated; run backward() first");
        return impl_->grad;
    }
    bool has_grad() const { return !impl_->grad.empty(); }
    void zero_grad() { impl_->grad.assign(impl_->values.size(), T(0)); }
    const char* op_name() const { return impl_->op; }

    /// Value copy detached from the graph.
    Tensor detach() const {
        auto impl = std::make_shared<TensorImpl<T>>();
        impl->shape = impl_->shape;
        impl->values = impl_->values;
        return Tensor(std::move(impl));
    }

    std::shared_ptr<TensorImpl<T>> impl() const { return impl_; }
    TensorImpl<T>* raw() const { return impl_.get(); }

private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

// ---- Tape & backward ---------------------------------------------------------

/// Topologically ordered record of the forward computation reaching a root.
/// Reverse traversal visits every node after all of its consumers.
template <class T>
struct Tape {
    std::vector<TensorImpl<T>*> order;  // topological: inputs before outputs

    static Tape build(const Tensor<T>& root) {
        Tape tape;
        std::unordered_set<TensorImpl<T>*> seen;
        // Iterative DFS postorder.
        std::vector<std::pair<TensorImpl<T>*, std::size_t>> stack;
        if (root.raw()->requires_grad) stack.emplace_back(root.raw(), 0);
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next == 0 && seen.count(node)) {
                stack.pop_back();
                continue;
            }
            if (next < node->inputs.size()) {
                TensorImpl<T>* child = node->inputs[next].get();
                ++next;
                if (child->requires_grad && !seen.count(child)) stack.emplace_back(child, 0);
            } else {
                seen.insert(node);
                tape.order.push_back(node);
                stack.pop_back();
            }
        }
        return tape;
    }
};

/// Reverse-mode sweep from a scalar loss. Seeds d(loss)/d(loss) = 1 and
/// accumulates gradients additively into every requires_grad tensor that the
/// loss depends on.
template <class T>
void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) {
        throw UsageError("backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
        throw UsageError("backward() on a tensor that does not require gradients");
    }
    Tape<T> tape = Tape<T>::build(loss);
    loss.raw()->ensure_grad();
    loss.raw()->grad[0] += T(1);
    for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
        TensorImpl<T>* node = *it;
        if (node->backward_step && !node->grad.empty()) node->backward_step(*node);
    }
}

namespace detail {

/// Creates the result node of an operation and wires it into the graph when
/// recording is on and some input needs gradients.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> values, const char* op,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(TensorImpl<T>&)> backward_step) {
    Tensor<T> out = Tensor<T>::from_data(std::move(shape), std::move(values));
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& in : inputs)
            if (in.requires_grad()) needs = true;
    }
    if (needs) {
        auto* impl = out.raw();
        impl->requires_grad = true;
        impl->op = op;
        impl->inputs.reserve(inputs.size());
        for (auto& in : inputs) impl->inputs.push_back(in.impl());
        impl->backward_step = std::move(backward_step);
    }
    return out;
}

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

}  // namespace detail

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace terraseg
