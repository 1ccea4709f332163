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

#ifndef DCML_OPTIM_HPP_
#define DCML_OPTIM_HPP_

#include <cstdint>
#include <string>

#include "dcml/param_set.hpp"

namespace dcml {

enum class OptimizerKind { kSgd, kAdam };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// Outer-loop optimizer over a ParamSet. Frozen entries are never touched.
class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, const ParamSet& like);

  void step(ParamSet& params, const ParamSet& grads);

  const OptimizerConfig& config() const { return cfg_; }
  std::int64_t steps() const { return steps_; }
  const ParamSet& first_moment() const { return m_; }
  const ParamSet& second_moment() const { return v_; }
  void restore(std::int64_t steps, ParamSet m, ParamSet v);

 private:
  OptimizerConfig cfg_;
  std::int64_t steps_ = 0;
  ParamSet m_;
  ParamSet v_;
};

}  // namespace dcml

#endif  // DCML_OPTIM_HPP_
