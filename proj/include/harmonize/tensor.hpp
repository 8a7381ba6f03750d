#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace harmonize {

class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

namespace detail {
inline thread_local bool grad_enabled = true;
}

inline bool grad_enabled() { return detail::grad_enabled; }

/// Disables graph recording in the current scope (inference paths).
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(detail::grad_enabled) { detail::grad_enabled = false; }
    ~NoGradGuard() { detail::grad_enabled = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> values;
    bool requires_grad = false;
    std::vector<T> grad;  // sized on first accumulation
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward;  // reads this->grad, accumulates into parents
    const char* op = nullptr;                   // null for leaves

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), T(0));
    }
};

// Dense row-major n-d array with optional reverse-mode gradient tracking.
// Copying a Tensor copies the handle; both copies address the same node.
template <typename T>
class Tensor {
  public:
    using value_type = T;

    // A default tensor holds an empty rank-1 node of zero elements, so
    // accidental use trips shape validation instead of dereferencing null.
    Tensor() : node_(std::make_shared<TensorNode<T>>()) { node_->shape = {0}; }

    explicit Tensor(Shape shape, T fill = T(0))
        : node_(std::make_shared<TensorNode<T>>()) {
        node_->shape = std::move(shape);
        node_->values.assign(shape_numel(node_->shape), fill);
    }

    Tensor(Shape shape, std::vector<T> values)
        : node_(std::make_shared<TensorNode<T>>()) {
        if (shape_numel(shape) != values.size())
            throw ShapeError("Tensor: " + std::to_string(values.size()) +
                             " values do not fill shape " + shape_str(shape));
        node_->shape = std::move(shape);
        node_->values = std::move(values);
    }

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t numel() const { return node_->values.size(); }

    std::vector<T>& values() { return node_->values; }
    const std::vector<T>& values() const { return node_->values; }
    T* data() { return node_->values.data(); }
    const T* data() const { return node_->values.data(); }

    T& operator[](std::size_t i) { return node_->values[i]; }
    const T& operator[](std::size_t i) const { return node_->values[i]; }

    T& at(std::size_t c, std::size_t h, std::size_t w) {
        return node_->values[(c * dim(1) + h) * dim(2) + w];
    }
    const T& at(std::size_t c, std::size_t h, std::size_t w) const {
        return node_->values[(c * dim(1) + h) * dim(2) + w];
    }
    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return node_->values[((n * dim(1) + c) * dim(2) + h) * dim(3) + w];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return node_->values[((n * dim(1) + c) * dim(2) + h) * dim(3) + w];
    }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        node_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return node_->grad.size() == node_->values.size(); }
    std::vector<T>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<T>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() {
        if (!node_->grad.empty()) node_->grad.assign(node_->values.size(), T(0));
    }

    /// Same values, no graph edge, no gradient.
    Tensor detach() const {
        Tensor out;
        out.node_ = std::make_shared<TensorNode<T>>();
        out.node_->shape = node_->shape;
        out.node_->values = node_->values;
        return out;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(node_->shape);
        for (std::size_t i = 0; i < numel(); ++i)
            out[i] = static_cast<U>(node_->values[i]);
        return out;
    }

    std::shared_ptr<TensorNode<T>> node() const { return node_; }

    static Tensor from_node(std::shared_ptr<TensorNode<T>> node) {
        Tensor out;
        out.node_ = std::move(node);
        return out;
    }

    // Reverse accumulation from a scalar. Leaf gradients accumulate across
    // repeated calls; interior gradients are recomputed each call.
    void backward() const {
        if (numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                        shape_str(shape()));
        if (!node_->requires_grad) return;

        std::vector<TensorNode<T>*> order;
        topo_order(order);
        for (TensorNode<T>* n : order)
            if (n->backward) n->grad.assign(n->values.size(), T(0));
        node_->ensure_grad();
        node_->grad[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backward) (*it)->backward(**it);
    }

  private:
    void topo_order(std::vector<TensorNode<T>*>& order) const {
        // Iterative post-order DFS over grad-requiring parents.
        std::unordered_set<TensorNode<T>*> visited;
        std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
        stack.emplace_back(node_.get(), 0);
        visited.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                TensorNode<T>* p = n->parents[next++].get();
                if (p->requires_grad && !visited.count(p)) {
                    visited.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

/// Builds an op output node; records graph edges only when recording is on
/// and some input participates in differentiation.
template <typename T>
Tensor<T> make_op(const char* op, Shape shape, std::vector<T> values,
                  std::vector<std::shared_ptr<TensorNode<T>>> parents,
                  std::function<void(TensorNode<T>&)> backward) {
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    bool track = grad_enabled;
    if (track) {
        track = false;
        for (const auto& p : parents)
            if (p->requires_grad) {
                track = true;
                break;
            }
    }
    if (track) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward = std::move(backward);
        node->op = op;
    }
    return Tensor<T>::from_node(std::move(node));
}

template <typename T>
void accumulate(TensorNode<T>& dst, const std::vector<T>& contribution) {
    dst.ensure_grad();
    for (std::size_t i = 0; i < contribution.size(); ++i) dst.grad[i] += contribution[i];
}

}  // namespace detail

template <typename T>
bool all_finite(const std::vector<T>& v) {
    for (T x : v)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

template <typename T>
Tensor<T> full_like(const Tensor<T>& ref, T value) {
    return Tensor<T>(ref.shape(), value);
}

}  // namespace harmonize
