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

#ifndef DCML_META_ENGINE_HPP_
#define DCML_META_ENGINE_HPP_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dcml/encoders.hpp"
#include "dcml/losses.hpp"
#include "dcml/optim.hpp"
#include "dcml/param_set.hpp"
#include "dcml/synthetic_data.hpp"

namespace dcml {

// Which parameters the inner loop updates. Everything else is carried over
// unchanged into the adapted set.
enum class AdaptSubset { kAll, kFilmOnly, kDomainEmbeddingOnly };

std::string to_string(AdaptSubset s);
AdaptSubset parse_adapt_subset(const std::string& s);
std::string to_string(GradientOrder o);
GradientOrder parse_order(const std::string& s);
std::string to_string(TaskReduction r);
TaskReduction parse_reduction(const std::string& s);

struct MetaConfig {
  double inner_lr = 0.01;  // alpha
  int inner_steps = 3;     // K
  int meta_batch_size = 4;
  int support_size = 16;
  int query_size = 16;
  GradientOrder order = GradientOrder::kFirst;
  AdaptSubset adapt_subset = AdaptSubset::kAll;
  TaskReduction task_reduction = TaskReduction::kSum;
  OptimizerConfig outer;
  ContrastiveConfig contrastive;
  AlignConfig align;

  void validate() const;
};

// Graph-level adaptation: `steps` SGD updates of the support contrastive
// loss starting from `theta`. With kSecond the result stays differentiable
// through the inner gradients.
struct Adaptation {
  VarSet params;
  std::vector<double> support_losses;
};

Adaptation adapt(const VarSet& theta, const Task& task, const ModelSpec& spec,
                 const MetaConfig& cfg, int steps, GradientOrder order);

struct AdaptedParams {
  ParamSet base;
  ParamSet adapted;
  std::vector<double> trace;  // support loss before each step
};

// K = cfg.inner_steps steps from theta. theta itself is never modified.
AdaptedParams inner_adapt(const ParamSet& theta, const Task& task,
                          const ModelSpec& spec, const MetaConfig& cfg);

// Number of inner_adapt/adapt invocations in this process.
std::uint64_t inner_adapt_calls();

// Per-domain image batches used by the alignment regularizer.
using AlignBatches = std::map<int, Batch>;

// Union of every task's support and query rows, grouped by domain.
AlignBatches alignment_batches(std::span<const Task> tasks);

// Alignment loss on pre-modulation image embeddings at `params`.
AlignmentLoss alignment_objective(const VarSet& params, const ModelSpec& spec,
                                  const AlignBatches& batches);

struct StepMetrics {
  std::vector<double> task_losses;  // query loss per task (baseline: 1 entry)
  double align_loss = 0.0;
  std::size_t align_pairs = 0;
  double total = 0.0;
  double grad_norm = 0.0;
};

struct GradientResult {
  ParamSet gradient;
  StepMetrics metrics;
};

// d/dtheta [ sum_i L_query_i(theta_i*) + lambda * L_align(theta) ].
GradientResult meta_gradient(const ParamSet& theta, std::span<const Task> tasks,
                             const AlignBatches& align, const ModelSpec& spec,
                             const MetaConfig& cfg);

// meta_gradient followed by one outer optimizer step on theta.
StepMetrics meta_step(ParamSet& theta, std::span<const Task> tasks,
                      const AlignBatches& align, const ModelSpec& spec,
                      const MetaConfig& cfg, Optimizer& optimizer);

// Plain contrastive gradient on one pooled batch (no adaptation, no
// alignment term).
GradientResult baseline_gradient(const ParamSet& theta, const Batch& batch,
                                 const ModelSpec& spec, const MetaConfig& cfg);

StepMetrics baseline_step(ParamSet& theta, const Batch& batch,
                          const ModelSpec& spec, const MetaConfig& cfg,
                          Optimizer& optimizer);

}  // namespace dcml

#endif  // DCML_META_ENGINE_HPP_
