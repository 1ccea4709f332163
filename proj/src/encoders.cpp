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

#include "dcml/encoders.hpp"

#include <cmath>
#include <random>

namespace dcml {
namespace {

const char* prefix(Modality m) { return m == Modality::kImage ? "image" : "text"; }

const EncoderSpec& encoder_spec(const ModelSpec& spec, Modality m) {
  return m == Modality::kImage ? spec.image : spec.text;
}

Tensor glorot_uniform(int fan_in, int fan_out, std::mt19937_64& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-s, s);
  Tensor w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return w;
}

void add_encoder(ParamSet& params, const EncoderSpec& enc, Modality m,
                 std::mt19937_64& rng) {
  int fan_in = enc.input_dim;
  std::vector<int> widths = enc.hidden_dims;
  widths.push_back(enc.embed_dim);
  for (std::size_t layer = 0; layer < widths.size(); ++layer) {
    const int fan_out = widths[layer];
    params.insert(layer_weight_name(m, static_cast<int>(layer)),
                  glorot_uniform(fan_in, fan_out, rng));
    params.insert(layer_bias_name(m, static_cast<int>(layer)),
                  Tensor::Zero(1, fan_out));
    fan_in = fan_out;
  }
}

void add_film(ParamSet& params, const ModelSpec& spec, Modality m) {
  const int de = spec.domains.embed_dim;
  const int d = spec.embed_dim();
  for (const char* head : {"gamma", "beta"}) {
    params.insert(film_name(m, head, "weight"), Tensor::Zero(de, d));
    params.insert(film_name(m, head, "bias"), Tensor::Zero(1, d));
  }
}

}  // namespace

std::string to_string(Activation a) {
  return a == Activation::kTanh ? "tanh" : "relu";
}

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation '" + s + "' (expected tanh|relu)");
}

void EncoderSpec::validate(const std::string& which) const {
  if (input_dim <= 0) throw ConfigError(which + ": input_dim must be positive");
  if (embed_dim <= 0) throw ConfigError(which + ": embed_dim must be positive");
  for (int h : hidden_dims) {
    if (h <= 0) throw ConfigError(which + ": hidden dims must be positive");
  }
}

void DomainTableSpec::validate() const {
  if (num_domains <= 0) throw ConfigError("num_domains must be positive");
  if (embed_dim <= 0) throw ConfigError("domain embed_dim must be positive");
}

void ModelSpec::validate() const {
  image.validate("image encoder");
  text.validate("text encoder");
  domains.validate();
  if (image.embed_dim != text.embed_dim) {
    throw ConfigError("image and text encoders must share embed_dim (" +
                      std::to_string(image.embed_dim) + " vs " +
                      std::to_string(text.embed_dim) + ")");
  }
}

std::string layer_weight_name(Modality m, int layer) {
  return std::string(prefix(m)) + ".l" + std::to_string(layer) + ".weight";
}

std::string layer_bias_name(Modality m, int layer) {
  return std::string(prefix(m)) + ".l" + std::to_string(layer) + ".bias";
}

std::string film_name(Modality m, const char* head, const char* part) {
  return std::string("film.") + prefix(m) + "." + head + "." + part;
}

ParamSet init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  ParamSet params;
  add_encoder(params, spec.image, Modality::kImage, rng);
  add_encoder(params, spec.text, Modality::kText, rng);

  std::normal_distribution<double> normal(0.0, 0.1);
  Tensor table(spec.domains.num_domains, spec.domains.embed_dim);
  for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = normal(rng);
  params.insert(kDomainTableName, std::move(table));

  add_film(params, spec, Modality::kImage);
  add_film(params, spec, Modality::kText);
  return params;
}

ad::Var encode(const ad::Var& input, const VarSet& params,
               const ModelSpec& spec, Modality modality) {
  const EncoderSpec& enc = encoder_spec(spec, modality);
  if (input.cols() != enc.input_dim) {
    throw ShapeError(std::string("encode_") + prefix(modality), input.shape(),
                     Shape{input.rows(), enc.input_dim});
  }
  const int layers = static_cast<int>(enc.hidden_dims.size()) + 1;
  ad::Var h = input;
  for (int layer = 0; layer < layers; ++layer) {
    h = ad::add(ad::matmul(h, params.at(layer_weight_name(modality, layer))),
                params.at(layer_bias_name(modality, layer)));
    if (layer + 1 < layers) {
      h = enc.activation == Activation::kTanh ? ad::tanh(h) : ad::relu(h);
    }
  }
  return h;
}

ad::Var encode_image(const ad::Var& x, const VarSet& params,
                     const ModelSpec& spec) {
  return encode(x, params, spec, Modality::kImage);
}

ad::Var encode_text(const ad::Var& t, const VarSet& params,
                    const ModelSpec& spec) {
  return encode(t, params, spec, Modality::kText);
}

FilmModulator film_modulator(const VarSet& params, Modality modality) {
  return {params.at(film_name(modality, "gamma", "weight")),
          params.at(film_name(modality, "gamma", "bias")),
          params.at(film_name(modality, "beta", "weight")),
          params.at(film_name(modality, "beta", "bias"))};
}

ad::Var modulate(const ad::Var& z, std::span<const int> domain_ids,
                 const ad::Var& domain_table, const FilmModulator& mod) {
  if (static_cast<Eigen::Index>(domain_ids.size()) != z.rows()) {
    throw ShapeError("modulate", z.shape(),
                     Shape{static_cast<Eigen::Index>(domain_ids.size()), 1});
  }
  for (int d : domain_ids) {
    if (d < 0 || d >= domain_table.rows()) {
      throw ConfigError("modulate: domain id " + std::to_string(d) +
                        " outside [0, " + std::to_string(domain_table.rows()) +
                        ")");
    }
  }
  const ad::Var e = ad::gather_rows(domain_table, domain_ids);
  const ad::Var gamma = ad::add_scalar(
      ad::add(ad::matmul(e, mod.gamma_weight), mod.gamma_bias), 1.0);
  const ad::Var beta = ad::add(ad::matmul(e, mod.beta_weight), mod.beta_bias);
  return ad::l2_normalize_rows(ad::add(ad::mul(gamma, z), beta));
}

PairEmbeddings embed_batch(const Batch& batch, const VarSet& params,
                           const ModelSpec& spec) {
  const ad::Var& table = params.at(kDomainTableName);
  const ad::Var zx = encode_image(ad::constant(batch.x), params, spec);
  const ad::Var zt = encode_text(ad::constant(batch.t), params, spec);
  return {modulate(zx, batch.domain_ids, table,
                   film_modulator(params, Modality::kImage)),
          modulate(zt, batch.domain_ids, table,
                   film_modulator(params, Modality::kText))};
}

}  // namespace dcml
