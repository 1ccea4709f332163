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

#include "dcml/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace dcml {
namespace {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, end);
  // Keep floats recognizably floating point in the YAML text.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

void require_keys(const YAML::Node& node, const std::string& section,
                  std::initializer_list<const char*> allowed) {
  if (!node.IsMap()) {
    throw ConfigError("config: section '" + section + "' must be a mapping");
  }
  std::set<std::string> names(allowed.begin(), allowed.end());
  std::set<std::string> seen;
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    const std::string full = section.empty() ? key : section + "." + key;
    if (!names.contains(key)) {
      throw ConfigError("config: unknown key '" + full + "'");
    }
    // yaml-cpp keeps duplicates and lookups return the first one.
    if (!seen.insert(key).second) {
      throw ConfigError("config: duplicate key '" + full + "'");
    }
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, const std::string& section,
          T& out) {
  const YAML::Node value = node[key];
  if (!value) return;
  try {
    out = value.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("config: bad value for '" +
                      (section.empty() ? std::string(key) : section + "." + key) +
                      "'");
  }
}

template <typename Enum, typename Parse>
void read_enum(const YAML::Node& node, const char* key,
               const std::string& section, Enum& out, Parse parse) {
  std::string text;
  bool present = static_cast<bool>(node[key]);
  read(node, key, section, text);
  if (present) out = parse(text);
}

YAML::Node section(const YAML::Node& root, const char* name) {
  return root[name];
}

std::string int_list(const std::vector<int>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(v[i]);
  }
  return s + "]";
}

std::string quoted(const std::string& s) {
  YAML::Emitter e;
  e << YAML::DoubleQuoted << s;
  return e.c_str();
}

void check_ascending(const std::vector<int>& ks) {
  if (ks.empty() || ks.front() != 0) {
    throw ConfigError("eval.ks must start at 0");
  }
  for (std::size_t i = 1; i < ks.size(); ++i) {
    if (ks[i] <= ks[i - 1]) throw ConfigError("eval.ks must be strictly ascending");
  }
}

}  // namespace

std::string to_string(TrainMode m) {
  return m == TrainMode::kMeta ? "meta" : "baseline";
}

TrainMode parse_mode(const std::string& s) {
  if (s == "meta") return TrainMode::kMeta;
  if (s == "baseline") return TrainMode::kBaseline;
  throw ConfigError("unknown mode '" + s + "' (expected meta|baseline)");
}

ModelSpec TrainConfig::model_spec() const {
  ModelSpec spec;
  spec.image = {generator.image_dim, model.image_hidden, model.embed_dim,
                model.activation};
  spec.text = {generator.text_dim, model.text_hidden, model.embed_dim,
               model.activation};
  spec.domains = {generator.num_domains, model.domain_embed_dim};
  return spec;
}

std::vector<int> TrainConfig::train_domains() const {
  std::vector<int> out;
  for (int d = 0; d < generator.num_domains; ++d) {
    if (std::find(data.heldout_domains.begin(), data.heldout_domains.end(), d) ==
        data.heldout_domains.end()) {
      out.push_back(d);
    }
  }
  return out;
}

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  generator.validate(meta.support_size + meta.query_size);
  model_spec().validate();
  meta.validate();
  std::set<int> held;
  for (int d : data.heldout_domains) {
    if (d < 0 || d >= generator.num_domains) {
      throw ConfigError("data.heldout_domains: unknown domain id " +
                        std::to_string(d));
    }
    if (!held.insert(d).second) {
      throw ConfigError("data.heldout_domains: duplicate id " + std::to_string(d));
    }
  }
  if (train_domains().size() < 2) {
    throw ConfigError("at least two training domains are required");
  }
  check_ascending(eval.ks);
  if (eval.every < 0 || eval.tasks < 1) {
    throw ConfigError("eval.every must be >= 0 and eval.tasks >= 1");
  }
  if (io.output_dir.empty()) throw ConfigError("io.output_dir must be set");
  if (io.checkpoint_every < 0) throw ConfigError("io.checkpoint_every must be >= 0");
}

TrainConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: YAML parse error: ") + e.what());
  }
  TrainConfig cfg;
  if (root.IsNull()) {
    cfg.validate();
    return cfg;
  }
  require_keys(root, "",
               {"seed", "mode", "iterations", "generator", "model", "meta",
                "optimizer", "losses", "data", "eval", "io"});
  read(root, "seed", "", cfg.seed);
  read_enum(root, "mode", "", cfg.mode, parse_mode);
  read(root, "iterations", "", cfg.iterations);

  if (auto g = section(root, "generator")) {
    require_keys(g, "generator",
                 {"num_domains", "num_concepts", "latent_dim", "image_dim",
                  "text_dim", "domain_shift", "noise_std", "samples_per_domain",
                  "seed"});
    auto& s = cfg.generator;
    read(g, "num_domains", "generator", s.num_domains);
    read(g, "num_concepts", "generator", s.num_concepts);
    read(g, "latent_dim", "generator", s.latent_dim);
    read(g, "image_dim", "generator", s.image_dim);
    read(g, "text_dim", "generator", s.text_dim);
    read(g, "domain_shift", "generator", s.domain_shift);
    read(g, "noise_std", "generator", s.noise_std);
    read(g, "samples_per_domain", "generator", s.samples_per_domain);
    read(g, "seed", "generator", s.seed);
  }
  if (auto m = section(root, "model")) {
    require_keys(m, "model",
                 {"image_hidden", "text_hidden", "embed_dim", "domain_embed_dim",
                  "activation"});
    read(m, "image_hidden", "model", cfg.model.image_hidden);
    read(m, "text_hidden", "model", cfg.model.text_hidden);
    read(m, "embed_dim", "model", cfg.model.embed_dim);
    read(m, "domain_embed_dim", "model", cfg.model.domain_embed_dim);
    read_enum(m, "activation", "model", cfg.model.activation, parse_activation);
  }
  if (auto m = section(root, "meta")) {
    require_keys(m, "meta",
                 {"inner_lr", "inner_steps", "meta_batch_size", "support_size",
                  "query_size", "order", "adapt_subset", "task_reduction"});
    auto& s = cfg.meta;
    read(m, "inner_lr", "meta", s.inner_lr);
    read(m, "inner_steps", "meta", s.inner_steps);
    read(m, "meta_batch_size", "meta", s.meta_batch_size);
    read(m, "support_size", "meta", s.support_size);
    read(m, "query_size", "meta", s.query_size);
    read_enum(m, "order", "meta", s.order, parse_order);
    read_enum(m, "adapt_subset", "meta", s.adapt_subset, parse_adapt_subset);
    read_enum(m, "task_reduction", "meta", s.task_reduction, parse_reduction);
  }
  if (auto o = section(root, "optimizer")) {
    require_keys(o, "optimizer", {"kind", "lr", "beta1", "beta2", "eps"});
    auto& s = cfg.meta.outer;
    read_enum(o, "kind", "optimizer", s.kind, parse_optimizer);
    read(o, "lr", "optimizer", s.lr);
    read(o, "beta1", "optimizer", s.beta1);
    read(o, "beta2", "optimizer", s.beta2);
    read(o, "eps", "optimizer", s.eps);
  }
  if (auto l = section(root, "losses")) {
    require_keys(l, "losses", {"temperature", "direction", "align_weight"});
    read(l, "temperature", "losses", cfg.meta.contrastive.temperature);
    read_enum(l, "direction", "losses", cfg.meta.contrastive.direction,
              parse_direction);
    read(l, "align_weight", "losses", cfg.meta.align.weight);
  }
  if (auto d = section(root, "data")) {
    require_keys(d, "data", {"heldout_domains", "dataset"});
    read(d, "heldout_domains", "data", cfg.data.heldout_domains);
    read(d, "dataset", "data", cfg.data.dataset);
  }
  if (auto e = section(root, "eval")) {
    require_keys(e, "eval", {"ks", "every", "tasks"});
    read(e, "ks", "eval", cfg.eval.ks);
    read(e, "every", "eval", cfg.eval.every);
    read(e, "tasks", "eval", cfg.eval.tasks);
  }
  if (auto io = section(root, "io")) {
    require_keys(io, "io", {"output_dir", "checkpoint_every"});
    read(io, "output_dir", "io", cfg.io.output_dir);
    read(io, "checkpoint_every", "io", cfg.io.checkpoint_every);
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string emit_config(const TrainConfig& c) {
  std::ostringstream o;
  o << "seed: " << c.seed << "\n"
    << "mode: " << to_string(c.mode) << "\n"
    << "iterations: " << c.iterations << "\n";
  const auto& g = c.generator;
  o << "generator:\n"
    << "  num_domains: " << g.num_domains << "\n"
    << "  num_concepts: " << g.num_concepts << "\n"
    << "  latent_dim: " << g.latent_dim << "\n"
    << "  image_dim: " << g.image_dim << "\n"
    << "  text_dim: " << g.text_dim << "\n"
    << "  domain_shift: " << format_double(g.domain_shift) << "\n"
    << "  noise_std: " << format_double(g.noise_std) << "\n"
    << "  samples_per_domain: " << g.samples_per_domain << "\n"
    << "  seed: " << g.seed << "\n";
  o << "model:\n"
    << "  image_hidden: " << int_list(c.model.image_hidden) << "\n"
    << "  text_hidden: " << int_list(c.model.text_hidden) << "\n"
    << "  embed_dim: " << c.model.embed_dim << "\n"
    << "  domain_embed_dim: " << c.model.domain_embed_dim << "\n"
    << "  activation: " << to_string(c.model.activation) << "\n";
  const auto& m = c.meta;
  o << "meta:\n"
    << "  inner_lr: " << format_double(m.inner_lr) << "\n"
    << "  inner_steps: " << m.inner_steps << "\n"
    << "  meta_batch_size: " << m.meta_batch_size << "\n"
    << "  support_size: " << m.support_size << "\n"
    << "  query_size: " << m.query_size << "\n"
    << "  order: " << to_string(m.order) << "\n"
    << "  adapt_subset: " << to_string(m.adapt_subset) << "\n"
    << "  task_reduction: " << to_string(m.task_reduction) << "\n";
  o << "optimizer:\n"
    << "  kind: " << to_string(m.outer.kind) << "\n"
    << "  lr: " << format_double(m.outer.lr) << "\n"
    << "  beta1: " << format_double(m.outer.beta1) << "\n"
    << "  beta2: " << format_double(m.outer.beta2) << "\n"
    << "  eps: " << format_double(m.outer.eps) << "\n";
  o << "losses:\n"
    << "  temperature: " << format_double(m.contrastive.temperature) << "\n"
    << "  direction: " << to_string(m.contrastive.direction) << "\n"
    << "  align_weight: " << format_double(m.align.weight) << "\n";
  o << "data:\n"
    << "  heldout_domains: " << int_list(c.data.heldout_domains) << "\n"
    << "  dataset: " << quoted(c.data.dataset) << "\n";
  o << "eval:\n"
    << "  ks: " << int_list(c.eval.ks) << "\n"
    << "  every: " << c.eval.every << "\n"
    << "  tasks: " << c.eval.tasks << "\n";
  o << "io:\n"
    << "  output_dir: " << quoted(c.io.output_dir) << "\n"
    << "  checkpoint_every: " << c.io.checkpoint_every << "\n";
  return o.str();
}

std::string config_hash(const TrainConfig& cfg) {
  const std::string text = emit_config(cfg);
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dcml
