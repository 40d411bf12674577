// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major float64 tensors with an eagerly built reverse-mode graph.
//
// Every op allocates a fresh node holding its result and, when any input
// requires a gradient, a closure that pushes the node's gradient back into its
// inputs. The graph lives as long as some handle to its output does; there is
// no global tape.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bimatch/common.hpp"

namespace bimatch::numkernel {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads. Null on
  // leaves, and on ops that cannot be differentiated.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return inputs.empty(); }

  std::span<double> grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (values.size() != numel_of(shape)) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = numel_of(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor filled(Shape shape, double value, bool requires_grad = false) {
    const std::size_t n = numel_of(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return from({}, {value}, requires_grad);
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false) {
    return from({rows, cols}, std::move(values), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  bool is_scalar() const { return numel() == 1 && rank() <= 1; }

  std::size_t rows() const {
    expect_rank(2);
    return node_->shape[0];
  }
  std::size_t cols() const {
    expect_rank(2);
    return node_->shape[1];
  }

  std::span<const double> data() const { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }
  double item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }

  // Leaf values may be rewritten in place (optimizer updates, initialisation);
  // op results may not.
  std::span<double> mutable_data() {
    if (!node_->is_leaf()) throw InvalidArgument("mutable_data() on a non-leaf tensor");
    return node_->data;
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  const char* op() const { return node_->op; }
  bool is_leaf() const { return node_->is_leaf(); }

  // Same values, no graph history.
  Tensor detach() const { return from(shape(), node_->data, false); }

  bool all_finite() const {
    return std::all_of(node_->data.begin(), node_->data.end(),
                       [](double v) { return std::isfinite(v); });
  }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  void expect_rank(std::size_t r) const {
    if (rank() != r) {
      throw ShapeError("expected rank-" + std::to_string(r) + " tensor, got " + shape_str(shape()));
    }
  }

  std::shared_ptr<Node> node_;
};

// Builds an op result. When no input needs a gradient (or recording is off)
// the result is a plain constant and `backward` is dropped.
inline Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                          std::vector<Tensor> inputs, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool needs = false;
  if (grad_enabled()) {
    for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Runs reverse-mode propagation from a scalar. Gradients of intermediate
// nodes are recomputed from scratch on every call; gradients of leaves
// accumulate across calls until zero_grad(). Returns the leaves that received
// a gradient, in graph order.
inline std::vector<Tensor> backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward() requires a scalar loss, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) return {};

  // Iterative post-order DFS; `order` ends up with inputs before consumers.
  std::vector<Node*> order;
  std::vector<Tensor> leaves;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  if (loss.is_leaf()) leaves.push_back(loss);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const std::shared_ptr<Node>& child = node->inputs[next++];
      if (child->requires_grad && seen.insert(child.get()).second) {
        if (child->is_leaf()) leaves.emplace_back(child);
        stack.emplace_back(child.get(), 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  loss.node()->grad_buffer()[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->is_leaf()) continue;
    if (!n->backward) {
      throw InvalidArgument(std::string("backward through unsupported op '") + n->op + "'");
    }
    n->backward(*n);
    for (const auto& in : n->inputs) {
      if (!in->requires_grad || in->grad.empty()) continue;
      for (double g : in->grad) {
        if (!std::isfinite(g)) {
          throw NumericError(std::string("non-finite gradient produced by op '") + n->op + "'");
        }
      }
    }
  }
  return leaves;
}

}  // namespace bimatch::numkernel
