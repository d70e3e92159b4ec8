#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rmmdf/tensor.hpp"

namespace rmmdf {

namespace detail {
inline thread_local bool grad_enabled = true;
inline thread_local std::string current_scope;
}  // namespace detail

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
    ~NoGradGuard() { detail::grad_enabled = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Names the module that produces the nodes created in its lifetime (e.g.
// "fusion.dam.mix.level2"). Used by graph audits.
class ScopeTag {
public:
    explicit ScopeTag(std::string tag) : prev_(std::move(detail::current_scope)) {
        detail::current_scope = std::move(tag);
    }
    ~ScopeTag() { detail::current_scope = std::move(prev_); }
    ScopeTag(const ScopeTag&) = delete;
    ScopeTag& operator=(const ScopeTag&) = delete;

private:
    std::string prev_;
};

inline bool grad_mode_enabled() { return detail::grad_enabled; }

template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    std::string op = "leaf";
    std::string scope;

    Tensor<T>& grad_buffer() {
        if (grad.empty()) grad = Tensor<T>::zeros(value.shape());
        return grad;
    }
    bool parent_needs_grad(std::size_t i) const { return parents[i]->requires_grad; }
};

// Handle to a node of the computation graph. Copies share the node.
template <class T>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Var constant(Tensor<T> value) {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(value);
        n->scope = detail::current_scope;
        return Var(std::move(n));
    }
    static Var leaf(Tensor<T> value, bool requires_grad) {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(value);
        n->requires_grad = requires_grad;
        n->scope = detail::current_scope;
        return Var(std::move(n));
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Tensor<T>& grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_->requires_grad; }
    Node<T>* node() const { return node_.get(); }
    const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

    void zero_grad() { node_->grad = Tensor<T>(); }

private:
    std::shared_ptr<Node<T>> node_;
};

// Creates the result node of an op. The backward closure is only kept when
// grad mode is on and at least one input requires a gradient.
template <class T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward,
                   std::string op) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->op = std::move(op);
    n->scope = detail::current_scope;
    bool needs = false;
    if (detail::grad_enabled)
        for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
        n->requires_grad = true;
        n->parents.reserve(inputs.size());
        for (auto& in : inputs) n->parents.push_back(in.node_ptr());
        n->backward = std::move(backward);
    }
    return Var<T>(std::move(n));
}

// Nodes reachable from root, parents before children.
template <class T>
std::vector<Node<T>*> topological_order(const Var<T>& root) {
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

// Reverse-mode sweep from a scalar root. Gradients accumulate into every
// reachable node that requires one.
template <class T>
void backward(const Var<T>& root) {
    if (root.value().size() != 1) throw ShapeError("backward: root must be a scalar, got " + root.shape().str());
    if (!root.requires_grad()) return;
    auto order = topological_order(root);
    root.node()->grad_buffer()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

// Same value, cut from the graph.
template <class T>
Var<T> detach(const Var<T>& x) {
    return Var<T>::constant(x.value());
}

}  // namespace rmmdf
