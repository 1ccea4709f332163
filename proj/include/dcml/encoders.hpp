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

#ifndef DCML_ENCODERS_HPP_
#define DCML_ENCODERS_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dcml/autodiff.hpp"
#include "dcml/batch.hpp"
#include "dcml/param_set.hpp"

namespace dcml {

enum class Activation { kTanh, kRelu };
enum class Modality { kImage, kText };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

// MLP encoder: input -> hidden layers (activation) -> linear embed layer.
struct EncoderSpec {
  int input_dim = 16;
  std::vector<int> hidden_dims{64};
  int embed_dim = 32;
  Activation activation = Activation::kTanh;

  void validate(const std::string& which) const;
};

struct DomainTableSpec {
  int num_domains = 5;
  int embed_dim = 16;

  void validate() const;
};

// Both encoders must share embed_dim so image and text embeddings are
// comparable.
struct ModelSpec {
  EncoderSpec image;
  EncoderSpec text;
  DomainTableSpec domains;

  void validate() const;
  int embed_dim() const { return image.embed_dim; }
};

// Parameter names, in insertion order:
//   image.l<i>.weight [in x out], image.l<i>.bias [1 x out]   (same for text)
//   domain.table [num_domains x domain_embed_dim]
//   film.<image|text>.<gamma|beta>.<weight|bias>
std::string layer_weight_name(Modality m, int layer);
std::string layer_bias_name(Modality m, int layer);
inline constexpr const char* kDomainTableName = "domain.table";
std::string film_name(Modality m, const char* head, const char* part);

// Encoder weights ~ U(-s, s), s = sqrt(6 / (fan_in + fan_out)); encoder
// biases and FiLM heads zero; domain embeddings ~ N(0, 0.1^2).
ParamSet init_params(const ModelSpec& spec, std::uint64_t seed);

// Pre-modulation embeddings z = f(x) / g(t). Not normalized.
ad::Var encode(const ad::Var& input, const VarSet& params,
               const ModelSpec& spec, Modality modality);
ad::Var encode_image(const ad::Var& x, const VarSet& params,
                     const ModelSpec& spec);
ad::Var encode_text(const ad::Var& t, const VarSet& params,
                    const ModelSpec& spec);

// FiLM heads for one side: gamma(e) = 1 + e W_g + b_g, beta(e) = e W_b + b_b.
struct FilmModulator {
  ad::Var gamma_weight;
  ad::Var gamma_bias;
  ad::Var beta_weight;
  ad::Var beta_bias;
};

FilmModulator film_modulator(const VarSet& params, Modality modality);

// z~ = normalize(gamma(e_d) * z + beta(e_d)), row-wise with d = domain_ids[i].
ad::Var modulate(const ad::Var& z, std::span<const int> domain_ids,
                 const ad::Var& domain_table, const FilmModulator& mod);

struct PairEmbeddings {
  ad::Var image;  // modulated, unit rows
  ad::Var text;
};

PairEmbeddings embed_batch(const Batch& batch, const VarSet& params,
                           const ModelSpec& spec);

}  // namespace dcml

#endif  // DCML_ENCODERS_HPP_
