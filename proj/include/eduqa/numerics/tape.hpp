// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <unordered_set>
#include <vector>

#include "eduqa/numerics/tensor.hpp"

namespace eduqa::num {

/// Execution record of the operations reachable from a loss, in topological
/// order (every node appears after all of its inputs).
template <typename T>
class ComputeTape {
  public:
    using NodePtr = typename Tensor<T>::NodePtr;

    static ComputeTape record(const Tensor<T>& root) {
        ComputeTape tape;
        std::unordered_set<const detail::Node<T>*> seen;
        // Iterative post-order DFS; graphs of deep models overflow recursion.
        struct Frame {
            NodePtr node;
            std::size_t next_parent;
        };
        std::vector<Frame> stack;
        if (root.node()->requires_grad) {
            stack.push_back({root.node(), 0});
            seen.insert(root.node().get());
        }
        while (!stack.empty()) {
            auto& top = stack.back();
            if (top.next_parent < top.node->parents.size()) {
                const auto& parent = top.node->parents[top.next_parent++];
                if (parent->requires_grad && seen.insert(parent.get()).second) {
                    stack.push_back({parent, 0});
                }
            } else {
                tape.nodes_.push_back(top.node);
                stack.pop_back();
            }
        }
        return tape;
    }

    const std::vector<NodePtr>& nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }

    /// Runs every backward rule once, newest node first. The root's gradient
    /// must already be seeded.
    void replay_backward() const {
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            auto& node = **it;
            if (node.backward_fn && !node.grad.empty()) node.backward_fn(node);
        }
    }

  private:
    std::vector<NodePtr> nodes_;
};

/// Populates grad on every requires_grad tensor reachable from a scalar loss.
/// Leaf gradients accumulate across calls; intermediate gradients are reset.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.size() != 1) throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw ContractError("backward() on a tensor that is not on the tape");
    auto tape = ComputeTape<T>::record(loss);
    for (const auto& node : tape.nodes()) {
        if (!node->is_leaf()) node->grad.clear();
    }
    loss.node()->ensure_grad()[0] += T(1);
    tape.replay_backward();
}

}  // namespace eduqa::num
