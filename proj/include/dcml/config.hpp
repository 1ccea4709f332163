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

#ifndef DCML_CONFIG_HPP_
#define DCML_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dcml/encoders.hpp"
#include "dcml/meta_engine.hpp"
#include "dcml/synthetic_data.hpp"

namespace dcml {

enum class TrainMode { kMeta, kBaseline };

std::string to_string(TrainMode m);
TrainMode parse_mode(const std::string& s);

struct ModelConfig {
  std::vector<int> image_hidden{64};
  std::vector<int> text_hidden{64};
  int embed_dim = 32;
  int domain_embed_dim = 16;
  Activation activation = Activation::kTanh;
};

struct DataConfig {
  std::vector<int> heldout_domains{4};
  std::string dataset;  // generated from `generator` when empty
};

struct EvalConfig {
  std::vector<int> ks{0, 1, 3, 5};
  int every = 0;  // 0 disables periodic evaluation
  int tasks = 20;
};

struct IoConfig {
  std::string output_dir = "run";
  int checkpoint_every = 500;  // 0 writes only the final checkpoint
};

// Everything a run needs. Every field has a default; load_config rejects
// unknown keys.
struct TrainConfig {
  std::uint64_t seed = 7;
  TrainMode mode = TrainMode::kMeta;
  int iterations = 2000;
  GeneratorSpec generator;
  ModelConfig model;
  MetaConfig meta;
  DataConfig data;
  EvalConfig eval;
  IoConfig io;

  ModelSpec model_spec() const;
  // Domains not listed in data.heldout_domains, ascending.
  std::vector<int> train_domains() const;
  void validate() const;
};

TrainConfig parse_config(const std::string& yaml_text);
TrainConfig load_config(const std::filesystem::path& path);

// Canonical YAML of the effective config. parse_config(emit_config(c))
// reproduces c exactly.
std::string emit_config(const TrainConfig& cfg);

// 16 hex digits of FNV-1a over emit_config(cfg).
std::string config_hash(const TrainConfig& cfg);

}  // namespace dcml

#endif  // DCML_CONFIG_HPP_
