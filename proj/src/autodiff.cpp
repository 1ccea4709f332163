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

#include "dcml/autodiff.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace dcml::ad {
namespace {

std::atomic<std::uint64_t> next_node_id{1};
thread_local bool grad_mode = true;

std::mutex fault_mutex;
std::string fault_op;

enum class Broadcast { kNone, kLhs, kRhs };

// [1 x n] operands may broadcast over the rows of an [m x n] operand.
Broadcast broadcast_kind(std::string_view op, const Var& a, const Var& b) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (a.cols() == b.cols()) {
    if (b.rows() == 1) return Broadcast::kRhs;
    if (a.rows() == 1) return Broadcast::kLhs;
  }
  throw ShapeError(std::string(op), a.shape(), b.shape());
}

void require_same_shape(std::string_view op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op), a.shape(), b.shape());
  }
}

void require_column(std::string_view op, const Var& a, const Var& v) {
  if (v.cols() != 1 || v.rows() != a.rows()) {
    throw ShapeError(std::string(op), a.shape(), v.shape());
  }
}

void require_nonzero(std::string_view op, const Tensor& t) {
  if ((t.array() == 0.0).any()) {
    throw DomainError(std::string(op), "division by zero");
  }
}

void require_ids(std::string_view op, std::span<const int> ids,
                 Eigen::Index rows) {
  for (int id : ids) {
    if (id < 0 || id >= rows) {
      throw DomainError(std::string(op), "row index " + std::to_string(id) +
                                             " outside [0, " +
                                             std::to_string(rows) + ")");
    }
  }
}

// Sums the gradient of a broadcast operand back to its [1 x n] shape.
Var reduce_to(const Var& g, bool broadcast) {
  return broadcast ? sum_rows(g) : g;
}

}  // namespace

double Var::item() const {
  if (!node_ || !shape().is_scalar()) {
    throw GraphError("item() requires a 1x1 value");
  }
  return node_->value(0, 0);
}

Var Var::make(std::string_view op, Tensor value, std::vector<Var> parents,
              BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
  node->op = op;
  node->value = std::move(value);
  bool needs = false;
  if (grad_mode) {
    for (const Var& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->parents = std::move(parents);
    node->backward = std::move(backward);
    node->requires_grad = true;
  }
  return Var(std::move(node));
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
  node->op = requires_grad ? "parameter" : "constant";
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(grad_mode) { grad_mode = false; }
NoGradGuard::~NoGradGuard() { grad_mode = previous_; }

bool grad_enabled() { return grad_mode; }

Var constant(Tensor value) { return Var::leaf(std::move(value), false); }
Var parameter(Tensor value) { return Var::leaf(std::move(value), true); }
Var detach(const Var& x) { return constant(x.value()); }

const Tensor& forward(const Var& root) {
  if (!root.defined()) throw GraphError("forward() on an undefined node");
  return root.value();
}

std::vector<Var> grad(const Var& root, std::span<const Var> wrt,
                      bool create_graph) {
  if (!root.defined() || !root.shape().is_scalar()) {
    throw GraphError("backward requires a scalar (1x1) root, got " +
                     (root.defined() ? root.shape().str() : "undefined"));
  }

  std::unordered_map<const Node*, Var> grads;
  if (root.requires_grad()) {
    // Iterative post-order DFS over the nodes that require gradients.
    std::vector<Var> order;
    std::unordered_set<const Node*> visited;
    std::vector<std::pair<Var, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root.node());
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      const auto& parents = v.parents();
      if (next < parents.size()) {
        const Var& p = parents[next++];
        if (p.requires_grad() && visited.insert(p.node()).second) {
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(v);
        stack.pop_back();
      }
    }

    std::string fault;
    {
      std::lock_guard lock(fault_mutex);
      fault = fault_op;
    }

    std::optional<NoGradGuard> no_grad;
    if (!create_graph) no_grad.emplace();

    grads.emplace(root.node(), constant(Tensor::Ones(1, 1)));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const Var& v = *it;
      auto found = grads.find(v.node());
      if (found == grads.end() || !v.node()->backward) continue;
      std::vector<Var> parent_grads = v.node()->backward(v, found->second);
      const bool flip = !fault.empty() && v.op() == fault;
      const auto& parents = v.parents();
      for (std::size_t i = 0; i < parents.size(); ++i) {
        if (i >= parent_grads.size() || !parent_grads[i].defined()) continue;
        if (!parents[i].requires_grad()) continue;
        Var contribution = flip ? neg(parent_grads[i]) : parent_grads[i];
        auto [slot, inserted] =
            grads.try_emplace(parents[i].node(), contribution);
        if (!inserted) slot->second = add(slot->second, contribution);
      }
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    auto found = grads.find(w.node());
    if (found == grads.end()) {
      out.push_back(constant(Tensor::Zero(w.rows(), w.cols())));
    } else if (create_graph) {
      out.push_back(found->second);
    } else {
      out.push_back(detach(found->second));
    }
  }
  return out;
}

Var add(const Var& a, const Var& b) {
  const Broadcast kind = broadcast_kind("add", a, b);
  Tensor value;
  switch (kind) {
    case Broadcast::kNone: value = a.value() + b.value(); break;
    case Broadcast::kRhs:
      value = a.value().rowwise() + b.value().row(0);
      break;
    case Broadcast::kLhs:
      value = b.value().rowwise() + a.value().row(0);
      break;
  }
  return Var::make("add", std::move(value), {a, b},
                   [kind](const Var&, const Var& g) -> std::vector<Var> {
                     return {reduce_to(g, kind == Broadcast::kLhs),
                             reduce_to(g, kind == Broadcast::kRhs)};
                   });
}

Var sub(const Var& a, const Var& b) {
  const Broadcast kind = broadcast_kind("sub", a, b);
  Tensor value;
  switch (kind) {
    case Broadcast::kNone: value = a.value() - b.value(); break;
    case Broadcast::kRhs:
      value = a.value().rowwise() - b.value().row(0);
      break;
    case Broadcast::kLhs:
      value = (-b.value()).rowwise() + a.value().row(0);
      break;
  }
  return Var::make("sub", std::move(value), {a, b},
                   [kind](const Var&, const Var& g) -> std::vector<Var> {
                     return {reduce_to(g, kind == Broadcast::kLhs),
                             reduce_to(neg(g), kind == Broadcast::kRhs)};
                   });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  return Var::make("mul", a.value().cwiseProduct(b.value()), {a, b},
                   [](const Var& self, const Var& g) -> std::vector<Var> {
                     const auto& p = self.parents();
                     return {mul(g, p[1]), mul(g, p[0])};
                   });
}

Var div(const Var& a, const Var& b) {
  require_same_shape("div", a, b);
  require_nonzero("div", b.value());
  return Var::make("div", a.value().cwiseQuotient(b.value()), {a, b},
                   [](const Var& self, const Var& g) -> std::vector<Var> {
                     const Var& den = self.parents()[1];
                     return {div(g, den), neg(div(mul(g, self), den))};
                   });
}

Var neg(const Var& a) {
  return Var::make("neg", -a.value(), {a},
                   [](const Var&, const Var& g) -> std::vector<Var> {
                     return {neg(g)};
                   });
}

Var scale(const Var& a, double factor) {
  return Var::make("scale", a.value() * factor, {a},
                   [factor](const Var&, const Var& g) -> std::vector<Var> {
                     return {scale(g, factor)};
                   });
}

Var add_scalar(const Var& a, double offset) {
  return Var::make("add_scalar", (a.value().array() + offset).matrix(), {a},
                   [](const Var&, const Var& g) -> std::vector<Var> {
                     return {g};
                   });
}

Var tanh(const Var& a) {
  return Var::make("tanh", a.value().array().tanh().matrix(), {a},
                   [](const Var& self, const Var& g) -> std::vector<Var> {
                     // 1 - tanh^2
                     return {mul(g, add_scalar(neg(mul(self, self)), 1.0))};
                   });
}

Var relu(const Var& a) {
  return Var::make("relu", a.value().cwiseMax(0.0), {a},
                   [](const Var& self, const Var& g) -> std::vector<Var> {
                     Tensor mask =
                         (self.parents()[0].value().array() > 0.0)
                             .cast<double>()
                             .matrix();
                     return {mul(g, constant(std::move(mask)))};
                   });
}

Var exp(const Var& a) {
  return Var::make("exp", a.value().array().exp().matrix(), {a},
                   [](const Var& self, const Var& g) -> std::vector<Var> {
                     return {mul(g, self)};
                   });
}

Var log(const Var& a) {
  if ((a.value().array() <= 0.0).any()) {
    throw DomainError("log", "argument must be strictly positive");
  }
  return Var::make("log", a.value().array().log().matrix(), {a},
                   [](const Var& self, const Var& g) -> std::vector<Var> {
                     return {div(g, self.parents()[0])};
                   });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul", a.shape(), b.shape());
  return Var::make("matmul", a.value() * b.value(), {a, b},
                   [](const Var& self, const Var& g) -> std::vector<Var> {
                     const auto& p = self.parents();
                     return {matmul(g, transpose(p[1])),
                             matmul(transpose(p[0]), g)};
                   });
}

Var transpose(const Var& a) {
  return Var::make("transpose", a.value().transpose(), {a},
                   [](const Var&, const Var& g) -> std::vector<Var> {
                     return {transpose(g)};
                   });
}

Var sum_rows(const Var& a) {
  const Eigen::Index rows = a.rows();
  return Var::make("sum_rows", a.value().colwise().sum(), {a},
                   [rows](const Var&, const Var& g) -> std::vector<Var> {
                     return {broadcast_rows(g, rows)};
                   });
}

Var sum_cols(const Var& a) {
  const Eigen::Index cols = a.cols();
  return Var::make("sum_cols", a.value().rowwise().sum(), {a},
                   [cols](const Var&, const Var& g) -> std::vector<Var> {
                     return {broadcast_cols(g, cols)};
                   });
}

Var sum_all(const Var& a) { return sum_rows(sum_cols(a)); }

Var mean_all(const Var& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

Var broadcast_rows(const Var& row, Eigen::Index rows) {
  if (row.rows() != 1 || rows < 1) {
    throw ShapeError("broadcast_rows", row.shape(), Shape{rows, row.cols()});
  }
  return Var::make("broadcast_rows", row.value().replicate(rows, 1), {row},
                   [](const Var&, const Var& g) -> std::vector<Var> {
                     return {sum_rows(g)};
                   });
}

Var broadcast_cols(const Var& col, Eigen::Index cols) {
  if (col.cols() != 1 || cols < 1) {
    throw ShapeError("broadcast_cols", col.shape(), Shape{col.rows(), cols});
  }
  return Var::make("broadcast_cols", col.value().replicate(1, cols), {col},
                   [](const Var&, const Var& g) -> std::vector<Var> {
                     return {sum_cols(g)};
                   });
}

Var mul_col(const Var& a, const Var& v) {
  require_column("mul_col", a, v);
  Tensor value = a.value().array().colwise() * v.value().col(0).array();
  return Var::make("mul_col", std::move(value), {a, v},
                   [](const Var& self, const Var& g) -> std::vector<Var> {
                     const auto& p = self.parents();
                     return {mul_col(g, p[1]), sum_cols(mul(g, p[0]))};
                   });
}

Var div_col(const Var& a, const Var& v) {
  require_column("div_col", a, v);
  require_nonzero("div_col", v.value());
  Tensor value = a.value().array().colwise() / v.value().col(0).array();
  return Var::make("div_col", std::move(value), {a, v},
                   [](const Var& self, const Var& g) -> std::vector<Var> {
                     const auto& p = self.parents();
                     // d(a/v)/dv = -a / v^2, reduced over the row.
                     return {div_col(g, p[1]),
                             neg(div(sum_cols(mul(g, p[0])), mul(p[1], p[1])))};
                   });
}

Var row_norm(const Var& a) {
  Tensor value = a.value().rowwise().norm();
  return Var::make("row_norm", std::move(value), {a},
                   [](const Var& self, const Var& g) -> std::vector<Var> {
                     return {mul_col(self.parents()[0], div(g, self))};
                   });
}

Var l2_normalize_rows(const Var& a) { return div_col(a, row_norm(a)); }

Var log_softmax_rows(const Var& a, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw DomainError("log_softmax_rows", "temperature must be positive");
  }
  const Var x = temperature == 1.0 ? a : scale(a, 1.0 / temperature);
  const Tensor& in = x.value();
  Tensor value(in.rows(), in.cols());
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    const double m = in.row(i).maxCoeff();
    const double lse = m + std::log((in.row(i).array() - m).exp().sum());
    value.row(i) = in.row(i).array() - lse;
  }
  return Var::make("log_softmax_rows", std::move(value), {x},
                   [](const Var& self, const Var& g) -> std::vector<Var> {
                     return {sub(g, mul_col(exp(self), sum_cols(g)))};
                   });
}

Var softmax_rows(const Var& a, double temperature) {
  return exp(log_softmax_rows(a, temperature));
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> targets) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
    throw ShapeError("softmax_cross_entropy", logits.shape(),
                     Shape{static_cast<Eigen::Index>(targets.size()), 1});
  }
  require_ids("softmax_cross_entropy", targets, logits.cols());
  Tensor one_hot = Tensor::Zero(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    one_hot(static_cast<Eigen::Index>(i), targets[i]) = 1.0;
  }
  const Var picked = mul(log_softmax_rows(logits), constant(std::move(one_hot)));
  return scale(sum_all(picked), -1.0 / static_cast<double>(logits.rows()));
}

Var squared_difference(const Var& a, const Var& b) {
  require_same_shape("squared_difference", a, b);
  const Var d = sub(a, b);
  return mul(d, d);
}

Var gather_rows(const Var& table, std::span<const int> ids) {
  require_ids("gather_rows", ids, table.rows());
  Tensor value(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    value.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> index(ids.begin(), ids.end());
  const Eigen::Index rows = table.rows();
  return Var::make("gather_rows", std::move(value), {table},
                   [index = std::move(index), rows](
                       const Var&, const Var& g) -> std::vector<Var> {
                     return {scatter_add_rows(g, index, rows)};
                   });
}

Var scatter_add_rows(const Var& src, std::span<const int> ids,
                     Eigen::Index rows) {
  if (static_cast<Eigen::Index>(ids.size()) != src.rows()) {
    throw ShapeError("scatter_add_rows", src.shape(),
                     Shape{static_cast<Eigen::Index>(ids.size()), 1});
  }
  require_ids("scatter_add_rows", ids, rows);
  Tensor value = Tensor::Zero(rows, src.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    value.row(ids[i]) += src.value().row(static_cast<Eigen::Index>(i));
  }
  std::vector<int> index(ids.begin(), ids.end());
  return Var::make("scatter_add_rows", std::move(value), {src},
                   [index = std::move(index)](
                       const Var&, const Var& g) -> std::vector<Var> {
                     return {gather_rows(g, index)};
                   });
}

namespace testing {

void set_gradient_fault(std::string op) {
  std::lock_guard lock(fault_mutex);
  fault_op = std::move(op);
}

std::string gradient_fault() {
  std::lock_guard lock(fault_mutex);
  return fault_op;
}

}  // namespace testing

}  // namespace dcml::ad
