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

#ifndef DCML_BATCH_HPP_
#define DCML_BATCH_HPP_

#include <span>
#include <vector>

#include "dcml/tensor.hpp"

namespace dcml {

// Paired records: row i of `x` (image features) and row i of `t` (text
// features) are a positive pair from domain `domain_ids[i]` and latent
// concept `concept_ids[i]`.
struct Batch {
  Tensor x;
  Tensor t;
  std::vector<int> domain_ids;
  std::vector<int> concept_ids;

  Eigen::Index size() const { return x.rows(); }
  bool single_domain() const;

  // Rows of several batches stacked in argument order.
  static Batch concat(std::span<const Batch> parts);
};

}  // namespace dcml

#endif  // DCML_BATCH_HPP_
