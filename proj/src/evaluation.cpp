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

#include "dcml/evaluation.hpp"

#include <algorithm>
#include <random>

namespace dcml {

std::string to_string(RetrievalDirection d) {
  return d == RetrievalDirection::kImageToText ? "i2t" : "t2i";
}

RetrievalReport retrieval_from_similarity(const Tensor& sim,
                                          RetrievalDirection direction) {
  if (sim.rows() != sim.cols() || sim.rows() < 2) {
    throw ConfigError("retrieval needs a square similarity matrix with n >= 2");
  }
  const Tensor scores =
      direction == RetrievalDirection::kImageToText ? sim : Tensor(sim.transpose());
  const Eigen::Index n = scores.rows();
  std::vector<double> ranks;
  ranks.reserve(static_cast<std::size_t>(n));
  int hits1 = 0;
  int hits5 = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double positive = scores(i, i);
    int rank = 1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (scores(i, j) > positive || (scores(i, j) == positive && j < i)) {
        ++rank;
      }
    }
    hits1 += rank <= 1;
    hits5 += rank <= 5;
    ranks.push_back(rank);
  }
  std::sort(ranks.begin(), ranks.end());
  const std::size_t mid = ranks.size() / 2;
  RetrievalReport r;
  r.direction = direction;
  r.n_queries = static_cast<int>(n);
  r.recall_at_1 = static_cast<double>(hits1) / static_cast<double>(n);
  r.recall_at_5 = static_cast<double>(hits5) / static_cast<double>(n);
  r.median_rank = ranks.size() % 2 == 1 ? ranks[mid]
                                        : 0.5 * (ranks[mid - 1] + ranks[mid]);
  return r;
}

RetrievalReport retrieval_eval(const ParamSet& theta, const ModelSpec& spec,
                               const Batch& batch,
                               RetrievalDirection direction) {
  if (batch.size() < 2) throw ConfigError("retrieval_eval needs >= 2 rows");
  if (!batch.single_domain()) {
    throw ConfigError("retrieval_eval expects a single-domain batch");
  }
  ad::NoGradGuard no_grad;
  const PairEmbeddings emb = embed_batch(batch, to_leaves(theta), spec);
  const Tensor sim = emb.image.value() * emb.text.value().transpose();
  return retrieval_from_similarity(sim, direction);
}

AdaptationCurve adaptation_curve(const ParamSet& theta, const ModelSpec& spec,
                                 const Task& task, const MetaConfig& cfg,
                                 std::span<const int> ks,
                                 RetrievalDirection direction) {
  if (ks.empty() || ks.front() != 0 || !std::is_sorted(ks.begin(), ks.end()) ||
      std::adjacent_find(ks.begin(), ks.end()) != ks.end()) {
    throw ConfigError("adaptation_curve: ks must be strictly ascending from 0");
  }
  AdaptationCurve curve;
  ParamSet current = theta;
  int done = 0;
  for (int k : ks) {
    if (k > done) {
      // First-order steps give the same values whether taken one call at a
      // time or in a single call; stepping incrementally keeps graphs small.
      const Adaptation a = adapt(to_leaves(current), task, spec, cfg, k - done,
                                 GradientOrder::kFirst);
      current = a.params.values();
      done = k;
    }
    curve.points.push_back({k, retrieval_eval(current, spec, task.query, direction)});
  }
  return curve;
}

AdaptationCurve mean_curve(std::span<const AdaptationCurve> curves) {
  if (curves.empty()) throw ConfigError("mean_curve: no curves");
  AdaptationCurve out = curves.front();
  for (std::size_t c = 1; c < curves.size(); ++c) {
    if (curves[c].points.size() != out.points.size()) {
      throw ConfigError("mean_curve: curves have different ks");
    }
    for (std::size_t p = 0; p < out.points.size(); ++p) {
      auto& acc = out.points[p].report;
      const auto& r = curves[c].points[p].report;
      acc.recall_at_1 += r.recall_at_1;
      acc.recall_at_5 += r.recall_at_5;
      acc.median_rank += r.median_rank;
      acc.n_queries += r.n_queries;
    }
  }
  const double n = static_cast<double>(curves.size());
  for (auto& p : out.points) {
    p.report.recall_at_1 /= n;
    p.report.recall_at_5 /= n;
    p.report.median_rank /= n;
  }
  return out;
}

ParamSet with_unseen_domains(const ParamSet& theta,
                             std::span<const int> unseen,
                             std::span<const int> seen) {
  if (seen.empty()) throw ConfigError("with_unseen_domains: no seen domains");
  ParamSet out = theta;
  Tensor& table = out.at(kDomainTableName);
  RowVector<double> mean = RowVector<double>::Zero(table.cols());
  for (int d : seen) {
    if (d < 0 || d >= table.rows()) throw ConfigError("unknown domain id");
    mean += table.row(d);
  }
  mean /= static_cast<double>(seen.size());
  for (int d : unseen) {
    if (d < 0 || d >= table.rows()) throw ConfigError("unknown domain id");
    table.row(d) = mean;
  }
  return out;
}

AdaptationCurve evaluate_domain(const ParamSet& theta, const ModelSpec& spec,
                                const DomainDataset& data, int domain,
                                const MetaConfig& cfg, std::span<const int> ks,
                                int num_tasks, std::uint64_t seed) {
  if (num_tasks < 1) throw ConfigError("evaluate_domain: num_tasks must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<AdaptationCurve> curves;
  for (int i = 0; i < num_tasks; ++i) {
    const Task task =
        sample_task(data, domain, cfg.support_size, cfg.query_size, rng);
    curves.push_back(adaptation_curve(theta, spec, task, cfg, ks));
  }
  return mean_curve(curves);
}

double domain_gap(const ParamSet& theta, const ModelSpec& spec,
                  const DomainDataset& data) {
  const std::vector<int> domains = data.domains();
  if (domains.size() < 2) throw ConfigError("domain_gap needs >= 2 domains");
  Tensor z;
  {
    ad::NoGradGuard no_grad;
    z = encode_image(ad::constant(data.x), to_leaves(theta), spec).value();
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = i + 1; j < data.size(); ++j) {
      const auto a = static_cast<std::size_t>(i);
      const auto b = static_cast<std::size_t>(j);
      if (data.domain_ids[a] == data.domain_ids[b] ||
          data.concept_ids[a] != data.concept_ids[b]) {
        continue;
      }
      sum += (z.row(i) - z.row(j)).squaredNorm();
      ++pairs;
    }
  }
  if (pairs == 0) throw ConfigError("domain_gap: no cross-domain concept pairs");
  return sum / static_cast<double>(pairs);
}

}  // namespace dcml
