/* Copyright 2026 The DCML Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef DCML_PARAM_SET_HPP_
#define DCML_PARAM_SET_HPP_

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dcml/autodiff.hpp"
#include "dcml/tensor.hpp"

namespace dcml {

// Ordered, uniquely named collection. Iteration order is insertion order.
template <typename Value>
class NamedSet {
 public:
  struct Entry {
    std::string name;
    Value value;
    bool trainable = true;
  };

  void insert(std::string name, Value value, bool trainable = true) {
    if (index_.contains(name)) {
      throw ConfigError("duplicate parameter name '" + name + "'");
    }
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(value), trainable});
  }

  bool contains(std::string_view name) const {
    return index_.contains(std::string(name));
  }
  std::size_t index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) {
      throw ConfigError("unknown parameter '" + std::string(name) + "'");
    }
    return it->second;
  }
  const Value& at(std::string_view name) const {
    return entries_[index_of(name)].value;
  }
  Value& at(std::string_view name) { return entries_[index_of(name)].value; }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Learnable arrays: encoder weights, FiLM heads and the domain table.
class ParamSet : public NamedSet<Tensor> {
 public:
  std::size_t num_scalars() const;
  // Same names, shapes and order.
  bool congruent(const ParamSet& other) const;
  // Bit-identical values and trainable flags.
  bool identical(const ParamSet& other) const;
  // Max-abs entry over all arrays.
  double max_abs() const;
  double l2_norm() const;
  ParamSet zeros_like() const;

  // Flattens in entry order.
  Eigen::VectorXd flatten() const;
  void assign_flat(const Eigen::VectorXd& flat);
};

// The same collection lifted into graph nodes.
class VarSet : public NamedSet<ad::Var> {
 public:
  bool congruent(const VarSet& other) const;
  ParamSet values() const;
};

// Trainable entries become gradient-tracking leaves, frozen ones constants.
VarSet to_leaves(const ParamSet& params);

// Gradient of a scalar root w.r.t. every entry of `wrt`. Frozen entries and
// entries not on a path to the root get zeros.
VarSet backward(const ad::Var& root, const VarSet& wrt,
                bool create_graph = false);
ParamSet backward_values(const ad::Var& root, const VarSet& wrt);

enum class GradientOrder { kFirst, kSecond };

// params - lr * grads as new graph nodes. With kFirst the gradients are
// detached, so downstream derivatives only flow through `params`; with
// kSecond they also flow through the graph that produced `grads`. Frozen
// entries pass through unchanged. lr = 0 is the identity.
VarSet differentiable_sgd_step(const VarSet& params, const VarSet& grads,
                               double lr,
                               GradientOrder order = GradientOrder::kFirst);

ParamSet axpy(double alpha, const ParamSet& x, const ParamSet& y);

}  // namespace dcml

#endif  // DCML_PARAM_SET_HPP_
