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

#include "dcml/synthetic_data.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dcml/errors.hpp"

namespace dcml {
namespace {

Tensor normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev,
                     std::mt19937_64& rng) {
  // Always consume the same draws so that specs differing only in a
  // standard deviation share one random stream.
  Tensor m(rows, cols);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * dist(rng);
  return m;
}

DomainDataset subset(const DomainDataset& data, const std::vector<int>& rows) {
  DomainDataset out;
  out.spec = data.spec;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.x.resize(n, data.x.cols());
  out.t.resize(n, data.t.cols());
  out.latents.resize(n, data.latents.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int r = rows[static_cast<std::size_t>(i)];
    out.x.row(i) = data.x.row(r);
    out.t.row(i) = data.t.row(r);
    out.latents.row(i) = data.latents.row(r);
    out.domain_ids.push_back(data.domain_ids[static_cast<std::size_t>(r)]);
    out.concept_ids.push_back(data.concept_ids[static_cast<std::size_t>(r)]);
  }
  return out;
}

}  // namespace

bool Batch::single_domain() const {
  return std::adjacent_find(domain_ids.begin(), domain_ids.end(),
                            std::not_equal_to<>()) == domain_ids.end();
}

Batch Batch::concat(std::span<const Batch> parts) {
  Batch out;
  Eigen::Index rows = 0;
  for (const Batch& b : parts) rows += b.size();
  if (parts.empty()) return out;
  out.x.resize(rows, parts.front().x.cols());
  out.t.resize(rows, parts.front().t.cols());
  Eigen::Index at = 0;
  for (const Batch& b : parts) {
    if (b.x.cols() != out.x.cols() || b.t.cols() != out.t.cols()) {
      throw ShapeError("Batch::concat", shape_of(out.x), shape_of(b.x));
    }
    out.x.middleRows(at, b.size()) = b.x;
    out.t.middleRows(at, b.size()) = b.t;
    out.domain_ids.insert(out.domain_ids.end(), b.domain_ids.begin(),
                          b.domain_ids.end());
    out.concept_ids.insert(out.concept_ids.end(), b.concept_ids.begin(),
                           b.concept_ids.end());
    at += b.size();
  }
  return out;
}

void GeneratorSpec::validate(int task_rows) const {
  if (num_domains < 2) throw ConfigError("generator: num_domains must be >= 2");
  if (num_concepts < 1) throw ConfigError("generator: num_concepts must be >= 1");
  if (latent_dim < 1 || image_dim < 1 || text_dim < 1) {
    throw ConfigError("generator: dimensions must be positive");
  }
  if (!(domain_shift >= 0.0) || !(noise_std >= 0.0)) {
    throw ConfigError("generator: domain_shift and noise_std must be >= 0");
  }
  if (samples_per_domain < 1 || samples_per_domain < 2 * task_rows) {
    throw ConfigError("generator: samples_per_domain (" +
                      std::to_string(samples_per_domain) +
                      ") must be >= 2 x (support + query) = " +
                      std::to_string(2 * task_rows));
  }
}

std::vector<int> DomainDataset::domains() const {
  std::set<int> ids(domain_ids.begin(), domain_ids.end());
  return {ids.begin(), ids.end()};
}

std::vector<int> DomainDataset::rows_of_domain(int domain) const {
  std::vector<int> rows;
  for (std::size_t i = 0; i < domain_ids.size(); ++i) {
    if (domain_ids[i] == domain) rows.push_back(static_cast<int>(i));
  }
  return rows;
}

Batch DomainDataset::rows(std::span<const int> indices) const {
  Batch b;
  const auto n = static_cast<Eigen::Index>(indices.size());
  b.x.resize(n, x.cols());
  b.t.resize(n, t.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int r = indices[static_cast<std::size_t>(i)];
    b.x.row(i) = x.row(r);
    b.t.row(i) = t.row(r);
    b.domain_ids.push_back(domain_ids[static_cast<std::size_t>(r)]);
    b.concept_ids.push_back(concept_ids[static_cast<std::size_t>(r)]);
  }
  return b;
}

Batch DomainDataset::domain_batch(int domain) const {
  return rows(rows_of_domain(domain));
}

DomainDataset generate(const GeneratorSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));

  const Tensor concepts =
      normal_matrix(spec.num_concepts, spec.latent_dim, 1.0, rng);
  const Tensor base_img =
      normal_matrix(spec.image_dim, spec.latent_dim, 1.0, rng);
  const Tensor base_txt =
      normal_matrix(spec.text_dim, spec.latent_dim, 1.0, rng);

  struct DomainMaps {
    Tensor img;
    Tensor txt;
    RowVector<double> img_offset;
    RowVector<double> txt_offset;
  };
  std::vector<DomainMaps> maps;
  for (int d = 0; d < spec.num_domains; ++d) {
    DomainMaps m;
    m.img = (base_img + normal_matrix(spec.image_dim, spec.latent_dim,
                                      spec.domain_shift, rng)) *
            map_scale;
    m.txt = (base_txt + normal_matrix(spec.text_dim, spec.latent_dim,
                                      spec.domain_shift, rng)) *
            map_scale;
    m.img_offset = normal_matrix(1, spec.image_dim, spec.domain_shift, rng);
    m.txt_offset = normal_matrix(1, spec.text_dim, spec.domain_shift, rng);
    maps.push_back(std::move(m));
  }

  DomainDataset out;
  out.spec = spec;
  const Eigen::Index n =
      static_cast<Eigen::Index>(spec.num_domains) * spec.samples_per_domain;
  out.x.resize(n, spec.image_dim);
  out.t.resize(n, spec.text_dim);
  out.latents.resize(n, spec.latent_dim);
  Eigen::Index row = 0;
  for (int d = 0; d < spec.num_domains; ++d) {
    const DomainMaps& m = maps[static_cast<std::size_t>(d)];
    for (int s = 0; s < spec.samples_per_domain; ++s, ++row) {
      const int c = s % spec.num_concepts;
      const RowVector<double> u =
          concepts.row(c) +
          RowVector<double>(normal_matrix(1, spec.latent_dim, spec.noise_std, rng));
      out.latents.row(row) = u;
      out.x.row(row) = u * m.img.transpose() + m.img_offset +
                       RowVector<double>(normal_matrix(1, spec.image_dim,
                                                       spec.noise_std, rng));
      out.t.row(row) = u * m.txt.transpose() + m.txt_offset +
                       RowVector<double>(normal_matrix(1, spec.text_dim,
                                                       spec.noise_std, rng));
      out.domain_ids.push_back(d);
      out.concept_ids.push_back(c);
    }
  }
  return out;
}

Task sample_task(const DomainDataset& data, int domain, int support_size,
                 int query_size, std::mt19937_64& rng) {
  if (support_size < 1 || query_size < 1) {
    throw ConfigError("sample_task: support and query sizes must be positive");
  }
  std::vector<int> rows = data.rows_of_domain(domain);
  const auto need = static_cast<std::size_t>(support_size + query_size);
  if (rows.size() < need) {
    throw ConfigError("sample_task: domain " + std::to_string(domain) +
                      " has " + std::to_string(rows.size()) +
                      " samples, need " + std::to_string(need));
  }
  // Partial Fisher-Yates: the first `need` slots become the sample.
  for (std::size_t i = 0; i < need; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, rows.size() - 1);
    std::swap(rows[i], rows[pick(rng)]);
  }
  Task task;
  task.domain_id = domain;
  task.support_rows.assign(rows.begin(), rows.begin() + support_size);
  task.query_rows.assign(rows.begin() + support_size,
                         rows.begin() + static_cast<std::ptrdiff_t>(need));
  task.support = data.rows(task.support_rows);
  task.query = data.rows(task.query_rows);
  return task;
}

std::pair<DomainDataset, DomainDataset> holdout_split(
    const DomainDataset& data, std::span<const int> heldout) {
  const std::vector<int> present = data.domains();
  std::set<int> held(heldout.begin(), heldout.end());
  for (int d : held) {
    if (std::find(present.begin(), present.end(), d) == present.end()) {
      throw ConfigError("holdout_split: unknown domain id " + std::to_string(d));
    }
  }
  std::vector<int> train_rows;
  std::vector<int> held_rows;
  for (std::size_t i = 0; i < data.domain_ids.size(); ++i) {
    (held.contains(data.domain_ids[i]) ? held_rows : train_rows)
        .push_back(static_cast<int>(i));
  }
  if (train_rows.empty()) {
    throw ConfigError("holdout_split: no training domains remain");
  }
  return {subset(data, train_rows), subset(data, held_rows)};
}

}  // namespace dcml
