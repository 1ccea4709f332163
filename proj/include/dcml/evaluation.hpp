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

#ifndef DCML_EVALUATION_HPP_
#define DCML_EVALUATION_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dcml/encoders.hpp"
#include "dcml/meta_engine.hpp"
#include "dcml/synthetic_data.hpp"

namespace dcml {

enum class RetrievalDirection { kImageToText, kTextToImage };

std::string to_string(RetrievalDirection d);

struct RetrievalReport {
  double recall_at_1 = 0.0;
  double recall_at_5 = 0.0;
  double median_rank = 0.0;
  int n_queries = 0;
  RetrievalDirection direction = RetrievalDirection::kImageToText;
};

// sim(i, j) scores image i against text j. Each query's true partner has the
// same index; ties go to the lower candidate index.
RetrievalReport retrieval_from_similarity(const Tensor& sim,
                                          RetrievalDirection direction);

// Cosine retrieval on modulated embeddings within one single-domain batch.
RetrievalReport retrieval_eval(const ParamSet& theta, const ModelSpec& spec,
                               const Batch& batch,
                               RetrievalDirection direction =
                                   RetrievalDirection::kImageToText);

struct AdaptationPoint {
  int k = 0;
  RetrievalReport report;
};

struct AdaptationCurve {
  std::vector<AdaptationPoint> points;
};

// Retrieval on the query set after k first-order inner steps on the support
// set, for each k in `ks` (ascending, starting at 0).
AdaptationCurve adaptation_curve(const ParamSet& theta, const ModelSpec& spec,
                                 const Task& task, const MetaConfig& cfg,
                                 std::span<const int> ks,
                                 RetrievalDirection direction =
                                     RetrievalDirection::kImageToText);

// Pointwise mean of curves sharing the same ks.
AdaptationCurve mean_curve(std::span<const AdaptationCurve> curves);

// Sets each unseen domain's embedding row to the mean of the seen rows.
ParamSet with_unseen_domains(const ParamSet& theta,
                             std::span<const int> unseen,
                             std::span<const int> seen);

// Mean adaptation curve over `num_tasks` tasks drawn from `domain`.
AdaptationCurve evaluate_domain(const ParamSet& theta, const ModelSpec& spec,
                                const DomainDataset& data, int domain,
                                const MetaConfig& cfg, std::span<const int> ks,
                                int num_tasks, std::uint64_t seed);

// Mean squared distance between pre-modulation image embeddings of every
// same-concept pair from two distinct domains.
double domain_gap(const ParamSet& theta, const ModelSpec& spec,
                  const DomainDataset& data);

}  // namespace dcml

#endif  // DCML_EVALUATION_HPP_
