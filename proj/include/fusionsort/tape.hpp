// Copyright 2026 The FusionSort Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fusionsort/tensor.hpp"

namespace fusionsort {

/// A named, persistent tensor owned by a network.
///
/// Trainable parameters receive gradients from Tape::backward. Non-trainable
/// entries (batch-norm running statistics) are state that is checkpointed but
/// never optimized.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void zero_grad() { grad = Tensor(value.shape(), 0.0); }
};

/// Ordered collection of parameters keyed by name. Iteration order is
/// lexicographic, which is also the checkpoint manifest order. Pointers to
/// stored parameters stay valid for the lifetime of the store.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter& add(std::string name, Tensor value, bool trainable = true);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Parameter*> trainable();
  std::vector<const Parameter*> all() const;
  std::vector<Parameter*> all();

  /// Number of scalar values across trainable parameters.
  std::size_t trainable_count() const;

  void zero_grad();

 private:
  std::map<std::string, Parameter> params_;
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid as long as the
/// tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// What a backward rule sees: the incoming gradient, the recorded input and
/// output values, and accumulators for the gradients of its inputs.
class BackwardContext {
 public:
  const Tensor& out_grad() const { return *out_grad_; }
  const Tensor& output() const { return *output_; }
  const Tensor& input(std::size_t i) const { return *inputs_[i]; }
  /// Accumulator for input `i`, or nullptr when that input needs no gradient.
  Tensor* grad(std::size_t i) const { return grads_[i]; }

 private:
  friend class Tape;
  const Tensor* out_grad_ = nullptr;
  const Tensor* output_ = nullptr;
  std::vector<const Tensor*> inputs_;
  std::vector<Tensor*> grads_;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// Reverse-mode gradient tape.
///
/// Every primitive op appends one node holding its output value, its input
/// node ids and a backward rule. `backward` replays the rules in reverse
/// recording order. Each node also carries the op name and the scope that
/// was active when it was recorded, which is what ablation tests inspect.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A value that never needs a gradient.
  Var constant(Tensor value);
  /// A value that accumulates a gradient but is not a parameter.
  Var leaf(Tensor value);
  /// Binds a parameter; after backward its gradient is added to `p.grad`.
  Var parameter(Parameter& p);

  Var record(std::string_view op, Tensor value, std::vector<Var> inputs,
             BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 and propagates to every reachable value.
  void backward(Var root);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  std::size_t size() const { return nodes_.size(); }
  std::string_view op_name(std::size_t id) const { return nodes_.at(id).op; }
  std::string_view scope_of(std::size_t id) const { return nodes_.at(id).scope; }

  /// Number of recorded ops (leaves excluded) whose scope starts with
  /// `prefix`.
  std::size_t count_ops_in_scope(std::string_view prefix) const;
  std::size_t count_ops_named(std::string_view op) const;

  /// RAII guard that appends a path component to the current scope.
  class Scope {
   public:
    Scope(Tape& tape, std::string_view name);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape& tape_;
    std::size_t previous_length_;
  };

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::string op;
    std::string scope;
    Parameter* param = nullptr;
  };

  Var push(Node node);
  Tensor& grad_slot(std::size_t id);

  std::vector<Node> nodes_;
  std::string scope_;
};

/// Test hook: while alive, the backward rule of every op named `op` sees an
/// incoming gradient scaled by 1.5. Used to prove the gradient checker
/// catches a broken rule. Thread-local.
class SabotageScope {
 public:
  explicit SabotageScope(std::string op);
  ~SabotageScope();
  SabotageScope(const SabotageScope&) = delete;
  SabotageScope& operator=(const SabotageScope&) = delete;

 private:
  std::string previous_;
};

}  // namespace fusionsort
