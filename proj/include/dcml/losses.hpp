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

#ifndef DCML_LOSSES_HPP_
#define DCML_LOSSES_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dcml/autodiff.hpp"

namespace dcml {

enum class ContrastiveDirection { kImageToText, kSymmetric };

std::string to_string(ContrastiveDirection d);
ContrastiveDirection parse_direction(const std::string& s);

struct ContrastiveConfig {
  double temperature = 0.1;
  ContrastiveDirection direction = ContrastiveDirection::kImageToText;

  void validate() const;
};

struct AlignConfig {
  double weight = 0.1;  // lambda

  void validate() const;
};

// InfoNCE over in-batch negatives with sim = dot product of (unit) rows:
//   L = -(1/N) sum_i log softmax_j(<zx_i, zt_j> / tau)[i]
// kSymmetric averages this with the text-to-image term.
ad::Var contrastive_loss(const ad::Var& image, const ad::Var& text,
                         const ContrastiveConfig& cfg);

// Pre-modulation image embeddings of one domain and the latent concept id
// of each row.
struct ConceptEmbeddings {
  ad::Var embeddings;
  std::vector<int> concept_ids;
};

struct AlignmentPair {
  int domain_a;
  int row_a;
  int domain_b;
  int row_b;
};

// Every same-concept pair across two distinct domains, domains visited in
// ascending id order.
std::vector<AlignmentPair> alignment_pairs(
    const std::map<int, ConceptEmbeddings>& by_domain);

struct AlignmentLoss {
  ad::Var loss;
  std::size_t num_pairs = 0;
};

// Mean squared L2 distance over alignment_pairs(by_domain). Zero (and the
// empty-pairing counter is incremented) when no pair exists.
AlignmentLoss alignment_loss(const std::map<int, ConceptEmbeddings>& by_domain);

// Number of alignment_loss calls that found no cross-domain pair.
std::uint64_t empty_alignment_count();

enum class TaskReduction { kSum, kMean };

// sum_i meta_i + lambda * align (or mean_i with kMean).
ad::Var total_loss(std::span<const ad::Var> meta_losses, const ad::Var& align,
                   double lambda, TaskReduction reduction = TaskReduction::kSum);

}  // namespace dcml

#endif  // DCML_LOSSES_HPP_
