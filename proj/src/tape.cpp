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

#include "fusionsort/tape.hpp"

#include "fusionsort/errors.hpp"

namespace fusionsort {

namespace {
thread_local std::string g_sabotaged_op;
}  // namespace

Parameter& ParameterStore::add(std::string name, Tensor value, bool trainable) {
  if (params_.count(name)) {
    throw ConfigError("duplicate parameter name '" + name + "'");
  }
  Parameter p;
  p.name = name;
  p.grad = Tensor(value.shape(), 0.0);
  p.value = std::move(value);
  p.trainable = trainable;
  auto [it, inserted] = params_.emplace(std::move(name), std::move(p));
  return it->second;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

bool ParameterStore::contains(const std::string& name) const {
  return params_.count(name) != 0;
}

std::vector<Parameter*> ParameterStore::trainable() {
  std::vector<Parameter*> out;
  for (auto& [name, p] : params_) {
    if (p.trainable) out.push_back(&p);
  }
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& [name, p] : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& [name, p] : params_) out.push_back(&p);
  return out;
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) {
    if (p.trainable) n += p.value.numel();
  }
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  n.scope = scope_;
  return push(std::move(n));
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.op = "leaf";
  n.scope = scope_;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.op = "parameter";
  n.scope = scope_;
  n.param = &p;
  return push(std::move(n));
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs,
                 BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.op = std::string(op);
  n.scope = scope_;
  n.backward = std::move(backward);
  for (const Var& v : inputs) {
    if (&v.tape() != this) {
      throw ConfigError("op '" + n.op + "' mixes values from different tapes");
    }
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  return push(std::move(n));
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor& Tape::grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  if (!n.has_grad) {
    throw ConfigError("no gradient recorded for value " + std::to_string(id));
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (&root.tape() != this) throw ConfigError("backward root is not on this tape");
  for (Node& n : nodes_) n.has_grad = false;
  grad_slot(root.id()).fill(1.0);

  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.has_grad || !node.requires_grad || !node.backward) continue;

    Tensor sabotaged;
    BackwardContext ctx;
    ctx.out_grad_ = &node.grad;
    if (!g_sabotaged_op.empty() && node.op == g_sabotaged_op) {
      sabotaged = node.grad;
      sabotaged *= 1.5;
      ctx.out_grad_ = &sabotaged;
    }
    ctx.output_ = &node.value;
    for (std::size_t in : node.inputs) {
      ctx.inputs_.push_back(&nodes_[in].value);
      ctx.grads_.push_back(nodes_[in].requires_grad ? &grad_slot(in) : nullptr);
    }
    node.backward(ctx);
  }

  for (Node& n : nodes_) {
    if (n.param != nullptr && n.has_grad && n.param->trainable) {
      n.param->grad += n.grad;
    }
  }
}

std::size_t Tape::count_ops_in_scope(std::string_view prefix) const {
  std::size_t count = 0;
  for (const Node& n : nodes_) {
    if (!n.backward) continue;
    if (std::string_view(n.scope).substr(0, prefix.size()) == prefix) ++count;
  }
  return count;
}

std::size_t Tape::count_ops_named(std::string_view op) const {
  std::size_t count = 0;
  for (const Node& n : nodes_) {
    if (n.backward && n.op == op) ++count;
  }
  return count;
}

Tape::Scope::Scope(Tape& tape, std::string_view name)
    : tape_(tape), previous_length_(tape.scope_.size()) {
  if (!tape_.scope_.empty()) tape_.scope_ += '.';
  tape_.scope_ += name;
}

Tape::Scope::~Scope() { tape_.scope_.resize(previous_length_); }

SabotageScope::SabotageScope(std::string op) : previous_(g_sabotaged_op) {
  g_sabotaged_op = std::move(op);
}

SabotageScope::~SabotageScope() { g_sabotaged_op = previous_; }

}  // namespace fusionsort
