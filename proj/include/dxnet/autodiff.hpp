// Reverse-mode automatic differentiation over Tensor.
//
// A Variable is a shared handle to a value plus an optional gradient slot and
// the op record that produced it. Ops build an acyclic producer graph;
// backward() walks it in reverse topological order and accumulates gradients,
// so a Variable used twice receives the sum of both path gradients.
#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dxnet/tensor.hpp"

namespace dxnet {

template <typename T>
struct VarNode {
    Tensor<T> value;
    Tensor<T> grad;        // same shape as value when present
    bool has_grad = false;
    bool requires_grad = false; // leaf marker: keep gradient for the caller
    bool grad_needed = false;   // requires_grad, or some input needs gradients
    std::vector<std::shared_ptr<VarNode>> inputs;
    std::function<void(VarNode&)> backward; // reads this->grad, accumulates into inputs

    void accumulate(const Tensor<T>& g) {
        if (!has_grad) {
            grad = g;
            has_grad = true;
            return;
        }
        T* a = grad.data();
        const T* b = g.data();
        for (std::int64_t i = 0; i < grad.numel(); ++i) a[i] += b[i];
    }
};

template <typename T>
class Variable {
public:
    Variable() = default;
    explicit Variable(Tensor<T> value, bool requires_grad = false)
        : node_(std::make_shared<VarNode<T>>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
        node_->grad_needed = requires_grad;
    }

    bool defined() const { return node_ != nullptr; }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; } // parameter updates between graphs

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return node_->has_grad; }
    const Tensor<T>& grad() const {
        if (!node_->has_grad) throw Error("gradient not populated; call backward() first");
        return node_->grad;
    }
    void zero_grad() {
        node_->has_grad = false;
        node_->grad = Tensor<T>();
    }

    std::shared_ptr<VarNode<T>> node() const { return node_; }

private:
    explicit Variable(std::shared_ptr<VarNode<T>> n) : node_(std::move(n)) {}
    std::shared_ptr<VarNode<T>> node_;

    template <typename U>
    friend Variable<U> make_op(const char* name, Tensor<U> out, std::vector<Variable<U>> ins,
                               std::function<void(VarNode<U>&)> back);
};

// Wraps an op result into the graph. Forward outputs are checked for
// non-finite values: NaN/Inf is an error surface, not a silent state.
template <typename T>
Variable<T> make_op(const char* name, Tensor<T> out, std::vector<Variable<T>> ins,
                    std::function<void(VarNode<T>&)> back) {
    if (!out.all_finite())
        throw NumericError(detail::msg("non-finite values in output of ", name));
    auto node = std::make_shared<VarNode<T>>();
    node->value = std::move(out);
    bool needed = false;
    node->inputs.reserve(ins.size());
    for (const auto& v : ins) {
        node->inputs.push_back(v.node());
        needed = needed || v.node()->grad_needed;
    }
    node->grad_needed = needed;
    if (needed) node->backward = std::move(back);
    return Variable<T>(std::move(node));
}

// Populates grads of every grad-needing Variable reachable from `loss`.
template <typename T>
void backward(const Variable<T>& loss) {
    if (!loss.defined()) throw Error("backward() on an undefined Variable");
    if (loss.value().numel() != 1)
        throw Error(detail::msg("backward() requires a scalar loss, got shape ",
                                shape_str(loss.value().shape())));

    // Iterative post-order DFS; the graph is acyclic by construction.
    std::vector<VarNode<T>*> order;
    std::unordered_set<VarNode<T>*> visited;
    std::vector<std::pair<VarNode<T>*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            VarNode<T>* next = node->inputs[idx++].get();
            if (next->grad_needed && visited.insert(next).second) stack.emplace_back(next, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->accumulate(Tensor<T>(loss.value().shape(), T(1)));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        VarNode<T>* node = *it;
        if (node->backward && node->has_grad) node->backward(*node);
    }
}

} // namespace dxnet
