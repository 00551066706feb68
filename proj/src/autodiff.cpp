// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixpro/autodiff.hpp"

#include <string>

#include "mixpro/error.hpp"

namespace mixpro::ad {

const Tensor& Var::value() const {
  if (graph_ == nullptr) throw ContractError("use of an empty Var");
  return graph_->value(id_);
}

Var Graph::constant(Tensor value) {
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return make(nodes_.size() - 1);
}

Var Graph::leaf(Tensor& tensor) {
  Node node;
  node.op = "leaf";
  node.leaf = &tensor;
  node.ref = &tensor;
  node.needs_grad = tensor.requires_grad();
  nodes_.push_back(std::move(node));
  return make(nodes_.size() - 1);
}

Var Graph::leaf(const Tensor& tensor) {
  Node node;
  node.op = "leaf";
  node.ref = &tensor;
  nodes_.push_back(std::move(node));
  return make(nodes_.size() - 1);
}

Var Graph::record(std::string_view op, Tensor value, std::vector<Var> inputs,
                  BackwardFn backward) {
  if (backward_done_) throw ContractError("recording on a graph after backward(); call reset()");
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    check_owned(in);
    node.inputs.push_back(in.id());
    node.needs_grad = node.needs_grad || nodes_[in.id()].needs_grad;
  }
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return make(nodes_.size() - 1);
}

void Graph::backward(const Var& loss) {
  check_owned(loss);
  if (backward_done_) throw ContractError("backward() called twice without reset()");
  const Node& root = nodes_[loss.id()];
  const Tensor& root_value = root.ref ? *root.ref : root.value;
  if (root_value.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_to_string(root_value.shape()));
  }
  backward_done_ = true;
  if (!root.needs_grad) return;
  grad_of(loss)[0] += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(*this, node.grad);
  }
}

bool Graph::needs_grad(const Var& v) const {
  check_owned(v);
  return nodes_[v.id()].needs_grad;
}

std::span<double> Graph::grad_of(const Var& v) {
  check_owned(v);
  Node& node = nodes_[v.id()];
  if (node.leaf != nullptr) return node.leaf->grad();
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

std::span<const double> Graph::grad(const Var& v) const {
  check_owned(v);
  const Node& node = nodes_[v.id()];
  if (node.leaf != nullptr) return node.leaf->grad();
  return node.grad;
}

const Tensor& Graph::value(std::size_t id) const {
  const Node& node = nodes_.at(id);
  return node.ref ? *node.ref : node.value;
}

std::string_view Graph::op_name(std::size_t id) const { return nodes_.at(id).op; }

std::span<const std::size_t> Graph::inputs(std::size_t id) const { return nodes_.at(id).inputs; }

void Graph::reset() {
  nodes_.clear();
  backward_done_ = false;
}

void Graph::check_owned(const Var& v) const {
  if (v.graph_ != this || v.id_ >= nodes_.size()) {
    throw ContractError("Var does not belong to this graph");
  }
}

}  // namespace mixpro::ad
