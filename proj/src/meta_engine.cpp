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

#include "dcml/meta_engine.hpp"

#include <atomic>
#include <cmath>

namespace dcml {
namespace {

std::atomic<std::uint64_t> adapt_calls{0};

bool in_subset(const std::string& name, AdaptSubset subset) {
  switch (subset) {
    case AdaptSubset::kAll: return true;
    case AdaptSubset::kFilmOnly: return name.starts_with("film.");
    case AdaptSubset::kDomainEmbeddingOnly: return name == kDomainTableName;
  }
  return false;
}

void require_finite_grads(const ParamSet& grads) {
  for (const auto& e : grads) {
    if (!e.value.allFinite()) {
      throw NumericalError("non-finite gradient for '" + e.name + "'");
    }
  }
}

}  // namespace

std::string to_string(AdaptSubset s) {
  switch (s) {
    case AdaptSubset::kAll: return "all";
    case AdaptSubset::kFilmOnly: return "film_only";
    case AdaptSubset::kDomainEmbeddingOnly: return "domain_embedding_only";
  }
  return "all";
}

AdaptSubset parse_adapt_subset(const std::string& s) {
  if (s == "all") return AdaptSubset::kAll;
  if (s == "film_only") return AdaptSubset::kFilmOnly;
  if (s == "domain_embedding_only") return AdaptSubset::kDomainEmbeddingOnly;
  throw ConfigError("unknown adapt_subset '" + s +
                    "' (expected all|film_only|domain_embedding_only)");
}

std::string to_string(GradientOrder o) {
  return o == GradientOrder::kFirst ? "first" : "second";
}

GradientOrder parse_order(const std::string& s) {
  if (s == "first") return GradientOrder::kFirst;
  if (s == "second") return GradientOrder::kSecond;
  throw ConfigError("unknown order '" + s + "' (expected first|second)");
}

std::string to_string(TaskReduction r) {
  return r == TaskReduction::kSum ? "sum" : "mean";
}

TaskReduction parse_reduction(const std::string& s) {
  if (s == "sum") return TaskReduction::kSum;
  if (s == "mean") return TaskReduction::kMean;
  throw ConfigError("unknown task_reduction '" + s + "' (expected sum|mean)");
}

void MetaConfig::validate() const {
  if (!(inner_lr > 0.0) || !std::isfinite(inner_lr)) {
    throw ConfigError("meta: inner_lr must be positive");
  }
  if (inner_steps < 0) throw ConfigError("meta: inner_steps must be >= 0");
  if (meta_batch_size < 1) throw ConfigError("meta: meta_batch_size must be >= 1");
  if (support_size < 1 || query_size < 1) {
    throw ConfigError("meta: support_size and query_size must be >= 1");
  }
  outer.validate();
  contrastive.validate();
  align.validate();
}

Adaptation adapt(const VarSet& theta, const Task& task, const ModelSpec& spec,
                 const MetaConfig& cfg, int steps, GradientOrder order) {
  if (steps < 0) throw ConfigError("adapt: steps must be >= 0");
  if (!task.support.single_domain() ||
      (task.support.size() > 0 && task.support.domain_ids.front() != task.domain_id)) {
    throw ConfigError("adapt: support rows must all belong to the task domain");
  }
  adapt_calls.fetch_add(1, std::memory_order_relaxed);

  Adaptation out;
  out.params = theta;
  for (int k = 0; k < steps; ++k) {
    const PairEmbeddings emb = embed_batch(task.support, out.params, spec);
    const ad::Var loss = contrastive_loss(emb.image, emb.text, cfg.contrastive);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw NumericalError("inner step " + std::to_string(k) +
                           ": non-finite support loss");
    }
    out.support_losses.push_back(value);

    VarSet masked;
    for (const auto& e : out.params) {
      masked.insert(e.name, e.value,
                    e.trainable && in_subset(e.name, cfg.adapt_subset));
    }
    const VarSet grads =
        backward(loss, masked, order == GradientOrder::kSecond);
    VarSet next = differentiable_sgd_step(masked, grads, cfg.inner_lr, order);
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i].trainable = out.params[i].trainable;
    }
    out.params = std::move(next);
  }
  return out;
}

AdaptedParams inner_adapt(const ParamSet& theta, const Task& task,
                          const ModelSpec& spec, const MetaConfig& cfg) {
  cfg.validate();
  Adaptation a =
      adapt(to_leaves(theta), task, spec, cfg, cfg.inner_steps, cfg.order);
  return {theta, a.params.values(), std::move(a.support_losses)};
}

std::uint64_t inner_adapt_calls() {
  return adapt_calls.load(std::memory_order_relaxed);
}

AlignBatches alignment_batches(std::span<const Task> tasks) {
  std::map<int, std::vector<Batch>> parts;
  for (const Task& task : tasks) {
    parts[task.domain_id].push_back(task.support);
    parts[task.domain_id].push_back(task.query);
  }
  AlignBatches out;
  for (auto& [domain, list] : parts) out.emplace(domain, Batch::concat(list));
  return out;
}

AlignmentLoss alignment_objective(const VarSet& params, const ModelSpec& spec,
                                  const AlignBatches& batches) {
  std::map<int, ConceptEmbeddings> by_domain;
  for (const auto& [domain, batch] : batches) {
    by_domain.emplace(domain,
                      ConceptEmbeddings{
                          encode_image(ad::constant(batch.x), params, spec),
                          batch.concept_ids});
  }
  return alignment_loss(by_domain);
}

GradientResult meta_gradient(const ParamSet& theta, std::span<const Task> tasks,
                             const AlignBatches& align, const ModelSpec& spec,
                             const MetaConfig& cfg) {
  cfg.validate();
  if (tasks.empty()) throw ConfigError("meta_step needs at least one task");
  const VarSet leaves = to_leaves(theta);

  GradientResult out;
  std::vector<ad::Var> query_losses;
  for (const Task& task : tasks) {
    const Adaptation adapted =
        adapt(leaves, task, spec, cfg, cfg.inner_steps, cfg.order);
    const PairEmbeddings emb = embed_batch(task.query, adapted.params, spec);
    ad::Var q = contrastive_loss(emb.image, emb.text, cfg.contrastive);
    if (!std::isfinite(q.item())) {
      throw NumericalError("non-finite query loss");
    }
    out.metrics.task_losses.push_back(q.item());
    query_losses.push_back(std::move(q));
  }

  AlignmentLoss al{ad::constant(Tensor::Zero(1, 1)), 0};
  if (!align.empty()) al = alignment_objective(leaves, spec, align);
  out.metrics.align_loss = al.loss.item();
  out.metrics.align_pairs = al.num_pairs;

  const ad::Var total = total_loss(query_losses, al.loss, cfg.align.weight,
                                   cfg.task_reduction);
  out.metrics.total = total.item();
  if (!std::isfinite(out.metrics.total)) {
    throw NumericalError("non-finite total meta-loss");
  }
  out.gradient = backward_values(total, leaves);
  require_finite_grads(out.gradient);
  out.metrics.grad_norm = out.gradient.l2_norm();
  return out;
}

StepMetrics meta_step(ParamSet& theta, std::span<const Task> tasks,
                      const AlignBatches& align, const ModelSpec& spec,
                      const MetaConfig& cfg, Optimizer& optimizer) {
  GradientResult g = meta_gradient(theta, tasks, align, spec, cfg);
  optimizer.step(theta, g.gradient);
  return g.metrics;
}

GradientResult baseline_gradient(const ParamSet& theta, const Batch& batch,
                                 const ModelSpec& spec, const MetaConfig& cfg) {
  cfg.validate();
  const VarSet leaves = to_leaves(theta);
  const PairEmbeddings emb = embed_batch(batch, leaves, spec);
  const ad::Var loss = contrastive_loss(emb.image, emb.text, cfg.contrastive);
  GradientResult out;
  out.metrics.task_losses.push_back(loss.item());
  out.metrics.total = loss.item();
  if (!std::isfinite(out.metrics.total)) {
    throw NumericalError("non-finite baseline loss");
  }
  out.gradient = backward_values(loss, leaves);
  require_finite_grads(out.gradient);
  out.metrics.grad_norm = out.gradient.l2_norm();
  return out;
}

StepMetrics baseline_step(ParamSet& theta, const Batch& batch,
                          const ModelSpec& spec, const MetaConfig& cfg,
                          Optimizer& optimizer) {
  GradientResult g = baseline_gradient(theta, batch, spec, cfg);
  optimizer.step(theta, g.gradient);
  return g.metrics;
}

}  // namespace dcml
