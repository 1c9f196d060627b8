// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/numerics/tape.hpp"

#include "diff3d/error.hpp"

namespace diff3d {

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.kind = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  Node n;
  n.kind = "param";
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Tape::record(const char* kind, Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  return record(kind, std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(const char* kind, Tensor value, const std::vector<Var>& inputs,
                 BackwardFn backward) {
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw InvalidArgument(std::string(kind) + ": input from another tape");
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::grad(Var v) {
  Node& n = nodes_[v.id()];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

Tensor* Tape::grad_sink(Var v) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return nullptr;
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
  return &n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw InvalidArgument("backward: loss from another tape");
  backward_order_.clear();
  Tensor* seed = grad_sink(loss);
  if (seed == nullptr) return;
  for (double& g : seed->values()) g = 1.0;

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    backward_order_.push_back(i);
    n.backward(*this, Var(this, i));
  }
  for (Node& n : nodes_) {
    if (n.param == nullptr || n.grad.empty()) continue;
    Tensor& acc = n.param->grad;
    if (acc.shape() != n.value.shape()) acc = Tensor(n.value.shape());
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += n.grad[k];
  }
}

std::vector<std::string> Tape::op_kinds() const {
  std::vector<std::string> kinds;
  kinds.reserve(nodes_.size());
  for (const Node& n : nodes_) kinds.emplace_back(n.kind);
  return kinds;
}

}  // namespace diff3d
