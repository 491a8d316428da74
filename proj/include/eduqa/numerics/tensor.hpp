// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "eduqa/errors.hpp"

namespace eduqa::num {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

// Graph-building is disabled inside a NoGradGuard scope. Thread-local so that
// independent sessions on different threads do not interfere.
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    // Propagates this->grad into parents' grads.
    std::function<void(Node&)> backward_fn;

    std::vector<T>& ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
        return grad;
    }
    bool is_leaf() const { return parents.empty(); }
};

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

class NoGradGuard {
  public:
    NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

/// Shaped row-major array with an optional gradient buffer.
///
/// Tensor is a handle: copies share storage and graph position, like the
/// tensors of most autograd libraries. Use clone() for an independent copy.
template <typename T>
class Tensor {
  public:
    using value_type = T;
    using NodePtr = std::shared_ptr<detail::Node<T>>;

    Tensor() = default;

    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
        : node_(std::make_shared<detail::Node<T>>()) {
        for (auto d : shape) {
            if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
        }
        if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
        if (values.size() != numel(shape)) {
            throw DimensionError("tensor of shape " + shape_str(shape) + " needs " +
                                 std::to_string(numel(shape)) + " values, got " +
                                 std::to_string(values.size()));
        }
        node_->shape = std::move(shape);
        node_->data = std::move(values);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto n = numel(shape);
        return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
    }

    static Tensor full(Shape shape, T value, bool requires_grad = false) {
        auto n = numel(shape);
        return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
    }

    static Tensor scalar(T value, bool requires_grad = false) { return Tensor({1}, {value}, requires_grad); }

    static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows, bool requires_grad = false) {
        std::vector<T> values;
        std::size_t cols = rows.size() ? rows.begin()->size() : 0;
        for (const auto& r : rows) {
            if (r.size() != cols) throw DimensionError("ragged matrix literal");
            values.insert(values.end(), r.begin(), r.end());
        }
        return Tensor({rows.size(), cols}, std::move(values), requires_grad);
    }

    template <typename Rng>
    static Tensor randn(Shape shape, T stddev, Rng& rng, bool requires_grad = false) {
        std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
        std::vector<T> values(numel(shape));
        for (auto& v : values) v = static_cast<T>(dist(rng));
        return Tensor(std::move(shape), std::move(values), requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }

    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->data.size(); }
    std::size_t rows() const { return node_->shape.at(0); }
    std::size_t cols() const { return node_->shape.size() > 1 ? node_->shape[1] : 1; }

    std::span<const T> data() const { return node_->data; }
    std::span<T> mutable_data() { return node_->data; }

    T item() const {
        if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
        return node_->data[0];
    }
    T at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) {
        if (!node_->is_leaf()) throw ContractError("requires_grad can only be toggled on leaf tensors");
        node_->requires_grad = flag;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return node_->ensure_grad(); }
    void zero_grad() { node_->grad.clear(); }

    const char* op() const { return node_->op; }
    bool is_leaf() const { return node_->is_leaf(); }

    /// Independent leaf copy of the values, outside any graph.
    Tensor clone() const { return Tensor(shape(), node_->data, false); }

    bool all_finite() const {
        for (const auto& v : node_->data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    const NodePtr& node() const { return node_; }

    // Builds an op result. If grad mode is on and any parent requires grad,
    // the result joins the graph with the given backward rule.
    static Tensor make_result(const char* op, Shape shape, std::vector<T> values,
                              std::vector<NodePtr> parents,
                              std::function<void(detail::Node<T>&)> backward_fn) {
        Tensor out(std::move(shape), std::move(values), false);
        out.node_->op = op;
        bool needs = false;
        if (grad_enabled()) {
            for (const auto& p : parents) needs = needs || p->requires_grad;
        }
        if (needs) {
            out.node_->requires_grad = true;
            out.node_->parents = std::move(parents);
            out.node_->backward_fn = std::move(backward_fn);
        }
        return out;
    }

  private:
    NodePtr node_;
};

}  // namespace eduqa::num
