#pragma once

#include "execrl/error.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace execrl::nn {

// A node of the recorded computation graph. Leaves are parameters or
// constants; interior nodes carry the closure that propagates their gradient
// to their parents.
struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    std::vector<double> saved;  // op-specific forward cache

    bool is_leaf() const { return !backward_fn; }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(grad_mode_flag()) { grad_mode_flag() = false; }
    ~NoGradGuard() { grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Handle to a 2-D float64 value in the graph. Copies share the node.
class Tensor {
public:
    Tensor() = default;

    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0, bool requires_grad = false)
        : node_(std::make_shared<Node>()) {
        node_->rows = rows;
        node_->cols = cols;
        node_->value.assign(rows * cols, fill);
        node_->requires_grad = requires_grad;
    }

    static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad = false) {
        if (values.size() != rows * cols)
            throw DimensionError("Tensor::from: " + std::to_string(values.size()) + " values for shape [" +
                                 std::to_string(rows) + "x" + std::to_string(cols) + "]");
        Tensor t;
        t.node_ = std::make_shared<Node>();
        t.node_->rows = rows;
        t.node_->cols = cols;
        t.node_->value = std::move(values);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(double value) { return from(1, 1, {value}); }

    static Tensor from_node(std::shared_ptr<Node> node) {
        Tensor t;
        t.node_ = std::move(node);
        return t;
    }

    bool defined() const { return static_cast<bool>(node_); }
    std::size_t rows() const { return node_->rows; }
    std::size_t cols() const { return node_->cols; }
    std::size_t size() const { return node_->value.size(); }
    std::string shape_str() const { return "[" + std::to_string(rows()) + "x" + std::to_string(cols()) + "]"; }

    std::span<const double> values() const { return node_->value; }
    std::span<double> mutable_values() { return node_->value; }
    double operator()(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }
    double item() const {
        if (size() != 1) throw UsageError("Tensor::item on non-scalar " + shape_str());
        return node_->value[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& shared_node() const { return node_; }

    // Reverse-mode sweep from this scalar. Leaf gradients accumulate across
    // calls; interior gradients are recomputed from zero each call.
    void backward() const {
        if (!defined() || size() != 1) throw UsageError("backward: loss must be a scalar, got " + shape_str());
        if (!node_->requires_grad) return;
        std::vector<Node*> order;
        std::unordered_set<Node*> visited;
        std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
        visited.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                Node* p = n->parents[next++].get();
                if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        for (Node* n : order)
            if (!n->is_leaf()) n->grad.assign(n->value.size(), 0.0);
        node_->ensure_grad();
        node_->grad[0] += 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
    }

private:
    std::shared_ptr<Node> node_;
};

// Builds an op result. Parents and the backward closure are retained only
// when recording is on and some parent needs a gradient.
inline Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> value,
                          std::initializer_list<Tensor> parents, std::function<void(Node&)> backward_fn,
                          std::vector<double> saved = {}) {
    auto node = std::make_shared<Node>();
    node->rows = rows;
    node->cols = cols;
    node->value = std::move(value);
    bool needs = false;
    if (grad_enabled())
        for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs) {
        node->requires_grad = true;
        for (const auto& p : parents) node->parents.push_back(p.shared_node());
        node->backward_fn = std::move(backward_fn);
        node->saved = std::move(saved);
    }
    return Tensor::from_node(std::move(node));
}

inline Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> value,
                          const std::vector<Tensor>& parents, std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->rows = rows;
    node->cols = cols;
    node->value = std::move(value);
    bool needs = false;
    if (grad_enabled())
        for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs) {
        node->requires_grad = true;
        for (const auto& p : parents) node->parents.push_back(p.shared_node());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor::from_node(std::move(node));
}

// Gradient buffer of parent i, or nullptr if it does not need one.
inline double* parent_grad(Node& self, std::size_t i) {
    Node& p = *self.parents[i];
    if (!p.requires_grad) return nullptr;
    p.ensure_grad();
    return p.grad.data();
}

}  // namespace execrl::nn
