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

#ifndef DCML_SYNTHETIC_DATA_HPP_
#define DCML_SYNTHETIC_DATA_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "dcml/batch.hpp"
#include "dcml/tensor.hpp"

namespace dcml {

// Linear-Gaussian multi-domain generator.
//
//   mu_c ~ N(0, I)                                  per concept
//   A_img = (B_img + D_img_d) / sqrt(latent_dim)    B ~ N(0, 1), D ~ N(0, shift^2)
//   b_img_d ~ N(0, shift^2)                         (text side likewise)
//   u = mu_c + N(0, noise^2)
//   x = A_img u + b_img_d + N(0, noise^2),  t = A_txt u + b_txt_d + N(0, noise^2)
//
// With domain_shift = 0 every domain shares one distribution.
struct GeneratorSpec {
  int num_domains = 5;
  int num_concepts = 20;
  int latent_dim = 8;
  int image_dim = 16;
  int text_dim = 16;
  double domain_shift = 1.0;
  double noise_std = 0.1;
  int samples_per_domain = 200;
  std::uint64_t seed = 7;

  // `task_rows` is support + query; each domain must hold two disjoint tasks.
  void validate(int task_rows = 0) const;
};

struct DomainDataset {
  GeneratorSpec spec;
  Tensor x;
  Tensor t;
  Tensor latents;  // generating u per row
  std::vector<int> domain_ids;
  std::vector<int> concept_ids;

  Eigen::Index size() const { return x.rows(); }
  // Distinct domain ids present, ascending.
  std::vector<int> domains() const;
  std::vector<int> rows_of_domain(int domain) const;
  Batch rows(std::span<const int> indices) const;
  Batch domain_batch(int domain) const;
};

DomainDataset generate(const GeneratorSpec& spec);

struct Task {
  int domain_id = 0;
  Batch support;
  Batch query;
  std::vector<int> support_rows;  // dataset row indices
  std::vector<int> query_rows;
};

// Draws support_size + query_size distinct rows of `domain` without
// replacement.
Task sample_task(const DomainDataset& data, int domain, int support_size,
                 int query_size, std::mt19937_64& rng);

// Partitions rows by domain membership in `heldout`.
std::pair<DomainDataset, DomainDataset> holdout_split(
    const DomainDataset& data, std::span<const int> heldout);

}  // namespace dcml

#endif  // DCML_SYNTHETIC_DATA_HPP_
