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

#include "dcml/param_set.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace dcml {

std::size_t ParamSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& e : *this) n += static_cast<std::size_t>(e.value.size());
  return n;
}

bool ParamSet::congruent(const ParamSet& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if ((*this)[i].name != other[i].name ||
        shape_of((*this)[i].value) != shape_of(other[i].value)) {
      return false;
    }
  }
  return true;
}

bool ParamSet::identical(const ParamSet& other) const {
  if (!congruent(other)) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& a = (*this)[i];
    const auto& b = other[i];
    if (a.trainable != b.trainable) return false;
    if (std::memcmp(a.value.data(), b.value.data(),
                    sizeof(double) * static_cast<std::size_t>(a.value.size())) !=
        0) {
      return false;
    }
  }
  return true;
}

double ParamSet::max_abs() const {
  double m = 0.0;
  for (const auto& e : *this) {
    if (e.value.size() > 0) m = std::max(m, e.value.cwiseAbs().maxCoeff());
  }
  return m;
}

double ParamSet::l2_norm() const {
  double s = 0.0;
  for (const auto& e : *this) s += e.value.squaredNorm();
  return std::sqrt(s);
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& e : *this) {
    out.insert(e.name, Tensor::Zero(e.value.rows(), e.value.cols()),
               e.trainable);
  }
  return out;
}

Eigen::VectorXd ParamSet::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(num_scalars()));
  Eigen::Index offset = 0;
  for (const auto& e : *this) {
    flat.segment(offset, e.value.size()) =
        Eigen::Map<const Eigen::VectorXd>(e.value.data(), e.value.size());
    offset += e.value.size();
  }
  return flat;
}

void ParamSet::assign_flat(const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(num_scalars())) {
    throw ShapeError("assign_flat", Shape{flat.size(), 1},
                     Shape{static_cast<Eigen::Index>(num_scalars()), 1});
  }
  Eigen::Index offset = 0;
  for (auto& e : *this) {
    Eigen::Map<Eigen::VectorXd>(e.value.data(), e.value.size()) =
        flat.segment(offset, e.value.size());
    offset += e.value.size();
  }
}

bool VarSet::congruent(const VarSet& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if ((*this)[i].name != other[i].name ||
        (*this)[i].value.shape() != other[i].value.shape()) {
      return false;
    }
  }
  return true;
}

ParamSet VarSet::values() const {
  ParamSet out;
  for (const auto& e : *this) out.insert(e.name, e.value.value(), e.trainable);
  return out;
}

VarSet to_leaves(const ParamSet& params) {
  VarSet out;
  for (const auto& e : params) {
    out.insert(e.name,
               e.trainable ? ad::parameter(e.value) : ad::constant(e.value),
               e.trainable);
  }
  return out;
}

VarSet backward(const ad::Var& root, const VarSet& wrt, bool create_graph) {
  std::vector<ad::Var> targets;
  targets.reserve(wrt.size());
  for (const auto& e : wrt) targets.push_back(e.value);
  std::vector<ad::Var> grads = ad::grad(root, targets, create_graph);
  VarSet out;
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    const auto& e = wrt[i];
    if (e.trainable) {
      out.insert(e.name, std::move(grads[i]), true);
    } else {
      out.insert(e.name,
                 ad::constant(Tensor::Zero(e.value.rows(), e.value.cols())),
                 false);
    }
  }
  return out;
}

ParamSet backward_values(const ad::Var& root, const VarSet& wrt) {
  return backward(root, wrt, false).values();
}

VarSet differentiable_sgd_step(const VarSet& params, const VarSet& grads,
                               double lr, GradientOrder order) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw ConfigError("sgd step: learning rate must be finite and >= 0, got " +
                      std::to_string(lr));
  }
  if (!params.congruent(grads)) {
    throw ConfigError("sgd step: parameter and gradient sets are not congruent");
  }
  VarSet out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!p.trainable || lr == 0.0) {
      out.insert(p.name, p.value, p.trainable);
      continue;
    }
    const ad::Var g = order == GradientOrder::kSecond
                          ? grads[i].value
                          : ad::detach(grads[i].value);
    out.insert(p.name, ad::sub(p.value, ad::scale(g, lr)), true);
  }
  return out;
}

ParamSet axpy(double alpha, const ParamSet& x, const ParamSet& y) {
  if (!x.congruent(y)) throw ConfigError("axpy: sets are not congruent");
  ParamSet out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.insert(y[i].name, y[i].value + alpha * x[i].value, y[i].trainable);
  }
  return out;
}

}  // namespace dcml
