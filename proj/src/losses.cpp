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

#include "dcml/losses.hpp"

#include <atomic>
#include <cmath>
#include <numeric>

namespace dcml {
namespace {

std::atomic<std::uint64_t> empty_alignments{0};

ad::Var info_nce(const ad::Var& logits, double temperature) {
  std::vector<int> targets(static_cast<std::size_t>(logits.rows()));
  std::iota(targets.begin(), targets.end(), 0);
  return ad::softmax_cross_entropy(ad::scale(logits, 1.0 / temperature),
                                   targets);
}

}  // namespace

std::string to_string(ContrastiveDirection d) {
  return d == ContrastiveDirection::kImageToText ? "image_to_text"
                                                 : "symmetric";
}

ContrastiveDirection parse_direction(const std::string& s) {
  if (s == "image_to_text") return ContrastiveDirection::kImageToText;
  if (s == "symmetric") return ContrastiveDirection::kSymmetric;
  throw ConfigError("unknown contrastive direction '" + s +
                    "' (expected image_to_text|symmetric)");
}

void ContrastiveConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature must be positive");
  }
}

void AlignConfig::validate() const {
  if (!(weight >= 0.0) || !std::isfinite(weight)) {
    throw ConfigError("alignment weight must be >= 0");
  }
}

ad::Var contrastive_loss(const ad::Var& image, const ad::Var& text,
                         const ContrastiveConfig& cfg) {
  cfg.validate();
  if (image.shape() != text.shape() || image.rows() < 1) {
    throw ShapeError("contrastive_loss", image.shape(), text.shape());
  }
  const ad::Var logits = ad::matmul(image, ad::transpose(text));
  const ad::Var i2t = info_nce(logits, cfg.temperature);
  if (cfg.direction == ContrastiveDirection::kImageToText) return i2t;
  const ad::Var t2i = info_nce(ad::transpose(logits), cfg.temperature);
  return ad::scale(ad::add(i2t, t2i), 0.5);
}

std::vector<AlignmentPair> alignment_pairs(
    const std::map<int, ConceptEmbeddings>& by_domain) {
  std::vector<AlignmentPair> pairs;
  for (auto a = by_domain.begin(); a != by_domain.end(); ++a) {
    for (auto b = std::next(a); b != by_domain.end(); ++b) {
      const auto& ca = a->second.concept_ids;
      const auto& cb = b->second.concept_ids;
      for (std::size_t i = 0; i < ca.size(); ++i) {
        for (std::size_t j = 0; j < cb.size(); ++j) {
          if (ca[i] == cb[j]) {
            pairs.push_back({a->first, static_cast<int>(i), b->first,
                             static_cast<int>(j)});
          }
        }
      }
    }
  }
  return pairs;
}

AlignmentLoss alignment_loss(const std::map<int, ConceptEmbeddings>& by_domain) {
  for (const auto& [domain, entry] : by_domain) {
    if (static_cast<Eigen::Index>(entry.concept_ids.size()) !=
        entry.embeddings.rows()) {
      throw ShapeError("alignment_loss", entry.embeddings.shape(),
                       Shape{static_cast<Eigen::Index>(entry.concept_ids.size()),
                             entry.embeddings.cols()});
    }
  }
  const std::vector<AlignmentPair> pairs = alignment_pairs(by_domain);
  if (pairs.empty()) {
    empty_alignments.fetch_add(1, std::memory_order_relaxed);
    return {ad::constant(Tensor::Zero(1, 1)), 0};
  }

  // Group pairs by (domain_a, domain_b) so each group is two gathers.
  ad::Var sum;
  std::size_t start = 0;
  while (start < pairs.size()) {
    std::size_t end = start;
    std::vector<int> rows_a;
    std::vector<int> rows_b;
    while (end < pairs.size() && pairs[end].domain_a == pairs[start].domain_a &&
           pairs[end].domain_b == pairs[start].domain_b) {
      rows_a.push_back(pairs[end].row_a);
      rows_b.push_back(pairs[end].row_b);
      ++end;
    }
    const ad::Var ea =
        ad::gather_rows(by_domain.at(pairs[start].domain_a).embeddings, rows_a);
    const ad::Var eb =
        ad::gather_rows(by_domain.at(pairs[start].domain_b).embeddings, rows_b);
    const ad::Var group = ad::sum_all(ad::squared_difference(ea, eb));
    sum = sum.defined() ? ad::add(sum, group) : group;
    start = end;
  }
  return {ad::scale(sum, 1.0 / static_cast<double>(pairs.size())),
          pairs.size()};
}

std::uint64_t empty_alignment_count() {
  return empty_alignments.load(std::memory_order_relaxed);
}

ad::Var total_loss(std::span<const ad::Var> meta_losses, const ad::Var& align,
                   double lambda, TaskReduction reduction) {
  if (meta_losses.empty()) {
    throw ConfigError("total_loss needs at least one meta-loss");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("total_loss: lambda must be >= 0");
  }
  ad::Var total = meta_losses.front();
  for (std::size_t i = 1; i < meta_losses.size(); ++i) {
    total = ad::add(total, meta_losses[i]);
  }
  if (reduction == TaskReduction::kMean && meta_losses.size() > 1) {
    total = ad::scale(total, 1.0 / static_cast<double>(meta_losses.size()));
  }
  if (lambda > 0.0) total = ad::add(total, ad::scale(align, lambda));
  return total;
}

}  // namespace dcml
