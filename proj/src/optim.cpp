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

#include "dcml/optim.hpp"

#include <cmath>

namespace dcml {

std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd|adam)");
}

void OptimizerConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw ConfigError("optimizer lr must be >= 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("adam eps must be positive");
}

Optimizer::Optimizer(OptimizerConfig cfg, const ParamSet& like)
    : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {
  cfg_.validate();
}

void Optimizer::step(ParamSet& params, const ParamSet& grads) {
  if (!params.congruent(grads) || !params.congruent(m_)) {
    throw ConfigError("optimizer step: parameter/gradient sets not congruent");
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    const Tensor& g = grads[i].value;
    if (cfg_.kind == OptimizerKind::kSgd) {
      p.value -= cfg_.lr * g;
      continue;
    }
    Tensor& m = m_[i].value;
    Tensor& v = v_[i].value;
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    p.value.array() -= cfg_.lr * (m.array() / c1) /
                       ((v.array() / c2).sqrt() + cfg_.eps);
  }
}

void Optimizer::restore(std::int64_t steps, ParamSet m, ParamSet v) {
  if (!m.congruent(m_) || !v.congruent(v_) || steps < 0) {
    throw ConfigError("optimizer restore: state does not match parameters");
  }
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace dcml
