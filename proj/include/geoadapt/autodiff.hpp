// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "geoadapt/errors.hpp"
#include "geoadapt/tensor.hpp"

namespace geoadapt {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const BasicTensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::int64_t dim(int i) const { return value().dim(i); }
  bool requires_grad() const { return tape->requires_grad(*this); }
};

template <typename T>
using GradientMap = std::map<std::string, BasicTensor<T>>;

/// Records primitive operations in execution order. Because nodes are only
/// ever appended after their inputs, the node list is already a topological
/// order and backward is a single reverse sweep.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(BasicTensor<T> value) { return push(std::move(value), false, {}, {}); }

  Var<T> parameter(const std::string& name, BasicTensor<T> value, bool trainable) {
    Var<T> v = push(std::move(value), trainable, {}, {});
    nodes_[static_cast<std::size_t>(v.id)].name = name;
    if (trainable) parameters_.push_back(v.id);
    return v;
  }

  // Appends an op result. The backward closure is dropped when no input needs
  // a gradient, so inference-only tapes keep no saved activations around.
  Var<T> record(BasicTensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    bool rg = false;
    for (const auto& in : inputs) {
      check_owner(in);
      rg = rg || nodes_[static_cast<std::size_t>(in.id)].requires_grad;
    }
    std::vector<int> ids;
    ids.reserve(inputs.size());
    for (const auto& in : inputs) ids.push_back(in.id);
    return push(std::move(value), rg, std::move(ids), rg ? std::move(fn) : BackwardFn{});
  }

  Var<T> record(BasicTensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn) {
    bool rg = false;
    std::vector<int> ids;
    ids.reserve(inputs.size());
    for (const auto& in : inputs) {
      check_owner(in);
      rg = rg || nodes_[static_cast<std::size_t>(in.id)].requires_grad;
      ids.push_back(in.id);
    }
    return push(std::move(value), rg, std::move(ids), rg ? std::move(fn) : BackwardFn{});
  }

  const BasicTensor<T>& value(Var<T> v) const { return node(v.id).value; }
  bool requires_grad(Var<T> v) const { return node(v.id).requires_grad; }
  const BasicTensor<T>& value_of(int id) const { return node(id).value; }
  bool requires_grad_of(int id) const { return node(id).requires_grad; }

  // Gradient of a node (only meaningful inside backward closures).
  const BasicTensor<T>& grad_of(int id) const { return node(id).grad; }

  // Accumulation target for an input's gradient, zero-initialised on first use.
  // Returns nullptr when the input does not need a gradient.
  BasicTensor<T>* grad_target(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = BasicTensor<T>(n.value.shape());
    return &n.grad;
  }

  int input_id(int self, std::size_t which) const { return node(self).inputs.at(which); }

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t backward_visits() const noexcept { return backward_visits_; }

  // Visit count per node from the last backward sweep (for instrumentation).
  const std::vector<int>& visit_counts() const noexcept { return visits_; }

  /// Reverse sweep from a scalar loss. Returns gradients keyed by parameter
  /// name for every trainable parameter leaf; frozen leaves get no entry.
  GradientMap<T> backward(Var<T> loss) {
    check_owner(loss);
    const Node& root = node(loss.id);
    if (root.value.size() != 1) {
      throw ContractError("backward requires a scalar loss, got shape " +
                          shape_str(root.value.shape()));
    }
    for (auto& n : nodes_) n.grad = BasicTensor<T>();
    visits_.assign(nodes_.size(), 0);
    backward_visits_ = 0;
    GradientMap<T> out;
    if (!root.requires_grad) return out;
    nodes_[static_cast<std::size_t>(loss.id)].grad = BasicTensor<T>(root.value.shape(), T(1));
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.requires_grad || n.grad.empty()) continue;
      ++visits_[static_cast<std::size_t>(id)];
      ++backward_visits_;
      if (n.backward) n.backward(*this, id);
    }
    for (int id : parameters_) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (id > loss.id) continue;
      out[n.name] = n.grad.empty() ? BasicTensor<T>(n.value.shape()) : n.grad;
    }
    return out;
  }

 private:
  struct Node {
    BasicTensor<T> value;
    BasicTensor<T> grad;
    bool requires_grad = false;
    std::vector<int> inputs;
    BackwardFn backward;
    std::string name;
  };

  const Node& node(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
      throw ContractError("variable does not belong to this tape");
    }
    return nodes_[static_cast<std::size_t>(id)];
  }

  void check_owner(Var<T> v) const {
    if (v.tape != this) throw ContractError("variable recorded on a different tape");
    (void)node(v.id);
  }

  Var<T> push(BasicTensor<T> value, bool rg, std::vector<int> inputs, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = rg;
    n.inputs = std::move(inputs);
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<int>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  std::vector<int> parameters_;
  std::vector<int> visits_;
  std::size_t backward_visits_ = 0;
};

namespace testing {

// Test hook: scales the gradient emitted by one named primitive's backward
// rule. Used only to prove that gradient checking catches a broken rule.
struct FaultInjection {
  std::string op;
  double factor = 1.0;
};

inline FaultInjection& fault() {
  static FaultInjection f;
  return f;
}

inline double fault_factor(const char* op) {
  const auto& f = fault();
  return (!f.op.empty() && f.op == op) ? f.factor : 1.0;
}

class ScopedFault {
 public:
  ScopedFault(std::string op, double factor) : saved_(fault()) { fault() = {std::move(op), factor}; }
  ~ScopedFault() { fault() = saved_; }
  ScopedFault(const ScopedFault&) = delete;
  ScopedFault& operator=(const ScopedFault&) = delete;

 private:
  FaultInjection saved_;
};

}  // namespace testing

}  // namespace geoadapt
