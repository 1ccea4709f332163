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

#ifndef DCML_AUTODIFF_HPP_
#define DCML_AUTODIFF_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dcml/errors.hpp"
#include "dcml/tensor.hpp"

// Reverse-mode automatic differentiation over dense matrices.
//
// Graphs are built eagerly: every op computes its value on construction and
// records its parents together with a vector-Jacobian product. The
// vector-Jacobian products are themselves expressed with the ops below, so
// gradients can be differentiated again (create_graph = true). This is what
// makes unrolled inner-loop updates exact for bilevel objectives.
namespace dcml::ad {

class Var;

// Given the node itself and the gradient flowing into it, returns one
// gradient per parent (an undefined Var means "no contribution").
using BackwardFn =
    std::function<std::vector<Var>(const Var& self, const Var& grad)>;

struct Node {
  std::uint64_t id = 0;
  std::string_view op;
  Tensor value;
  std::vector<Var> parents;
  BackwardFn backward;
  bool requires_grad = false;
};

class Var {
 public:
  Var() = default;

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Shape shape() const { return shape_of(node_->value); }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  // Value of a 1x1 node.
  double item() const;

  std::uint64_t id() const { return node_->id; }
  std::string_view op() const { return node_->op; }
  bool requires_grad() const { return node_->requires_grad; }
  const std::vector<Var>& parents() const { return node_->parents; }
  const Node* node() const { return node_.get(); }

  static Var make(std::string_view op, Tensor value, std::vector<Var> parents,
                  BackwardFn backward);
  static Var leaf(Tensor value, bool requires_grad);

 private:
  explicit Var(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

// While alive, ops on this thread record no parents (results are constants).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Leaves.
Var constant(Tensor value);
Var parameter(Tensor value);
Var detach(const Var& x);

// Value at the root. Graphs are evaluated on construction, so this never
// recomputes.
const Tensor& forward(const Var& root);

// Gradients of a 1x1 root with respect to each entry of `wrt`. Entries not
// reachable from the root get zeros. With create_graph the returned
// gradients are graph nodes that can be differentiated again; otherwise they
// are constants.
std::vector<Var> grad(const Var& root, std::span<const Var> wrt,
                      bool create_graph = false);

// Elementwise. `add`/`sub` broadcast a [1 x n] operand over the rows of an
// [m x n] operand; no other broadcasting is supported.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);
Var tanh(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);

// Linear algebra.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

// Reductions and their adjoints. sum_rows adds up the rows ([m x n] ->
// [1 x n]), sum_cols the columns ([m x n] -> [m x 1]).
Var sum_rows(const Var& a);
Var sum_cols(const Var& a);
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var broadcast_rows(const Var& row, Eigen::Index rows);
Var broadcast_cols(const Var& col, Eigen::Index cols);

// Per-row scaling by a column vector v of shape [m x 1].
Var mul_col(const Var& a, const Var& v);
Var div_col(const Var& a, const Var& v);

// Row-wise L2 norm, [m x n] -> [m x 1].
Var row_norm(const Var& a);
Var l2_normalize_rows(const Var& a);

// Row-wise log-softmax of a / temperature.
Var log_softmax_rows(const Var& a, double temperature = 1.0);
Var softmax_rows(const Var& a, double temperature = 1.0);
// Mean over rows of -log softmax(logits)[i, targets[i]].
Var softmax_cross_entropy(const Var& logits, std::span<const int> targets);

Var squared_difference(const Var& a, const Var& b);

// out[i] = table[ids[i]]. The adjoint scatter-adds into the table.
Var gather_rows(const Var& table, std::span<const int> ids);
// out[ids[i]] += src[i], out has `rows` rows.
Var scatter_add_rows(const Var& src, std::span<const int> ids,
                     Eigen::Index rows);

namespace testing {

// Negates the vector-Jacobian product of every node whose op tag equals
// `op`. Used to check that the finite-difference suite catches broken
// gradients. Pass an empty string to clear.
void set_gradient_fault(std::string op);
std::string gradient_fault();

}  // namespace testing

}  // namespace dcml::ad

#endif  // DCML_AUTODIFF_HPP_
