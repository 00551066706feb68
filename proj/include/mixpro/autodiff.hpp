// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <deque>
#include <vector>

#include "mixpro/tensor.hpp"

namespace mixpro::ad {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while the graph
/// that produced it is alive and has not been reset.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Receives the gradient of the node's output and scatters it into the
/// gradients of its inputs through Graph::grad_of().
using BackwardFn = std::function<void(Graph&, std::span<const double> grad_out)>;

/// Reverse-mode tape. Nodes are appended in execution order, which is a
/// topological order, so backward is a single reverse sweep.
///
/// Leaves registered with leaf() refer to caller-owned tensors; those must
/// outlive the graph's backward pass. Gradients of tracked leaves accumulate
/// into Tensor::grad() and are never cleared by the graph.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Untracked value owned by the graph.
  Var constant(Tensor value);
  /// Reference to a caller-owned tensor; tracked iff it requires grad.
  Var leaf(Tensor& tensor);
  /// Untracked reference to a caller-owned tensor.
  Var leaf(const Tensor& tensor);

  /// Appends an op node. `backward` is dropped when no input needs a
  /// gradient.
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Reverse sweep from a scalar loss. A second call without reset() is a
  /// ContractError.
  void backward(const Var& loss);

  bool needs_grad(const Var& v) const;
  /// Mutable gradient buffer of a node, zero-allocated on first use. For
  /// tracked leaves this is the tensor's own grad buffer.
  std::span<double> grad_of(const Var& v);
  /// Gradient of an intermediate node after backward(); empty when the node
  /// was not reached.
  std::span<const double> grad(const Var& v) const;

  const Tensor& value(std::size_t id) const;
  std::string_view op_name(std::size_t id) const;
  std::span<const std::size_t> inputs(std::size_t id) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  bool backward_done() const noexcept { return backward_done_; }

  /// Drops every node so the graph can be reused.
  void reset();

 private:
  struct Node {
    std::string_view op;
    Tensor value;
    const Tensor* ref = nullptr;
    Tensor* leaf = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
    std::vector<double> grad;
  };

  Var make(std::size_t id) { return Var(this, id); }
  void check_owned(const Var& v) const;

  std::deque<Node> nodes_;  // deque: value references survive appends
  bool backward_done_ = false;
};

}  // namespace mixpro::ad
