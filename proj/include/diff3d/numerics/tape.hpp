// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "diff3d/numerics/tensor.hpp"

namespace diff3d {

/// A learnable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad = Tensor(value.shape()); }
};

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run reverse-mode tape.
///
/// Ops are appended in evaluation order; backward() walks them in exact reverse
/// order and finally adds leaf gradients into the bound Parameter::grad
/// accumulators. A tape is single-writer and not copyable.
class Tape {
 public:
  /// Receives the tape and the handle of the op's own output.
  using BackwardFn = std::function<void(Tape&, Var)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to `p`. Repeated calls for the same parameter share one node.
  Var param(Parameter& p);

  /// Appends an op node. `backward` is only kept (and only run) when one of
  /// `inputs` requires a gradient.
  Var record(const char* kind, Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward);
  Var record(const char* kind, Tensor value, const std::vector<Var>& inputs,
             BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  /// Upstream gradient of an op output during backward (zeros if it never
  /// received any).
  const Tensor& grad(Var v);
  /// Accumulator of an input, or nullptr when that input needs no gradient.
  Tensor* grad_sink(Var v);

  /// Seeds d(loss)/d(loss) = 1 and back-propagates.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  std::vector<std::string> op_kinds() const;
  /// Node ids whose backward rule ran, in the order they ran.
  const std::vector<std::size_t>& backward_order() const { return backward_order_; }

 private:
  struct Node {
    const char* kind = "";
    Tensor value;
    Parameter* param = nullptr;
    bool requires_grad = false;
    Tensor grad;
    BackwardFn backward;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  std::vector<std::size_t> backward_order_;
};

}  // namespace diff3d
