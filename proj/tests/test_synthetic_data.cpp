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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <Eigen/QR>

#include "dcml/errors.hpp"
#include "dcml/synthetic_data.hpp"

namespace dcml {
namespace {

GeneratorSpec small_spec() {
  GeneratorSpec g;
  g.num_domains = 3;
  g.num_concepts = 5;
  g.samples_per_domain = 60;
  return g;
}

TEST(Generate, DeterministicBySeed) {
  const DomainDataset a = generate(small_spec());
  const DomainDataset b = generate(small_spec());
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.t, b.t);
  EXPECT_EQ(a.concept_ids, b.concept_ids);
  GeneratorSpec other = small_spec();
  other.seed = 8;
  EXPECT_NE(generate(other).x, a.x);
}

TEST(Generate, ShapesAndIds) {
  const GeneratorSpec g = small_spec();
  const DomainDataset d = generate(g);
  EXPECT_EQ(d.size(), 180);
  EXPECT_EQ(d.x.cols(), g.image_dim);
  EXPECT_EQ(d.t.cols(), g.text_dim);
  EXPECT_EQ(d.domains(), (std::vector<int>{0, 1, 2}));
  for (int dom : d.domains()) EXPECT_EQ(d.rows_of_domain(dom).size(), 60u);
  for (int c : d.concept_ids) {
    EXPECT_GE(c, 0);
    EXPECT_LT(c, g.num_concepts);
  }
}

TEST(Generate, NoiseFreeSharedDomainsDuplicateConcepts) {
  GeneratorSpec g = small_spec();
  g.noise_std = 0;
  g.domain_shift = 0;
  const DomainDataset d = generate(g);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    for (Eigen::Index j = i + 1; j < d.size(); ++j) {
      if (d.concept_ids[static_cast<std::size_t>(i)] != d.concept_ids[static_cast<std::size_t>(j)]) continue;
      ASSERT_EQ(d.x.row(i), d.x.row(j));
      ASSERT_EQ(d.t.row(i), d.t.row(j));
    }
  }
}

TEST(Generate, ValidatesSpec) {
  GeneratorSpec g = small_spec();
  g.num_domains = 1;
  EXPECT_THROW(generate(g), ConfigError);
  g = small_spec();
  g.latent_dim = 0;
  EXPECT_THROW(generate(g), ConfigError);
  g = small_spec();
  g.noise_std = -0.1;
  EXPECT_THROW(generate(g), ConfigError);
  g = small_spec();
  EXPECT_THROW(g.validate(32), ConfigError);  // 60 < 2 * 32
  EXPECT_NO_THROW(g.validate(30));
}

double mean_cross_domain_distance(const DomainDataset& d) {
  double sum = 0;
  long count = 0;
  for (Eigen::Index i = 0; i < d.size(); i += 3) {
    for (Eigen::Index j = 0; j < d.size(); j += 3) {
      if (d.domain_ids[static_cast<std::size_t>(i)] == d.domain_ids[static_cast<std::size_t>(j)]) continue;
      sum += (d.x.row(i) - d.x.row(j)).norm();
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

TEST(Generate, SeparabilityGrowsWithShift) {
  double previous = -1;
  for (double shift : {0.0, 0.5, 1.0, 2.0}) {
    GeneratorSpec g = small_spec();
    g.domain_shift = shift;
    const double dist = mean_cross_domain_distance(generate(g));
    EXPECT_GE(dist, previous) << "shift " << shift;
    previous = dist;
  }
}

// Distance between the two domains' mean image vectors.
double mean_gap(const Tensor& x, const std::vector<int>& labels) {
  Eigen::RowVectorXd m0 = Eigen::RowVectorXd::Zero(x.cols());
  Eigen::RowVectorXd m1 = m0;
  int n0 = 0, n1 = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (labels[static_cast<std::size_t>(i)] == 0) {
      m0 += x.row(i);
      ++n0;
    } else {
      m1 += x.row(i);
      ++n1;
    }
  }
  return (m0 / n0 - m1 / n1).norm();
}

double permutation_p_value(const DomainDataset& d, int rounds, std::uint64_t seed) {
  const double observed = mean_gap(d.x, d.domain_ids);
  std::vector<int> labels = d.domain_ids;
  std::mt19937_64 rng(seed);
  int extreme = 0;
  for (int r = 0; r < rounds; ++r) {
    std::shuffle(labels.begin(), labels.end(), rng);
    if (mean_gap(d.x, labels) >= observed) ++extreme;
  }
  return (extreme + 1.0) / (rounds + 1.0);
}

TEST(Generate, ZeroShiftDomainsAreIndistinguishable) {
  GeneratorSpec g = small_spec();
  g.num_domains = 2;
  g.samples_per_domain = 100;
  g.domain_shift = 0;
  EXPECT_GT(permutation_p_value(generate(g), 999, 1), 0.05);
  g.domain_shift = 1.0;
  EXPECT_LT(permutation_p_value(generate(g), 999, 1), 0.01);
}

TEST(Generate, PositivePairsShareTheLatent) {
  GeneratorSpec g = small_spec();
  g.num_concepts = 12;
  g.noise_std = 0.01;
  const DomainDataset d = generate(g);
  for (int dom : d.domains()) {
    const std::vector<int> rows = d.rows_of_domain(dom);
    const Batch b = d.rows(rows);
    // Per-domain least-squares decoders back to latent space.
    auto fit = [&](const Tensor& in) {
      Tensor a(in.rows(), in.cols() + 1);
      a << in, Tensor::Ones(in.rows(), 1);
      Tensor lat(static_cast<Eigen::Index>(rows.size()), d.latents.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) lat.row(static_cast<Eigen::Index>(i)) = d.latents.row(rows[i]);
      const Tensor w = a.colPivHouseholderQr().solve(lat);
      return Tensor(a * w);
    };
    const Tensor ux = fit(b.x);
    const Tensor ut = fit(b.t);
    // First 12 rows carry 12 distinct concepts.
    for (Eigen::Index i = 0; i < 12; ++i) {
      Eigen::Index best = -1;
      double best_d = 1e300;
      for (Eigen::Index j = 0; j < 12; ++j) {
        const double dist = (ux.row(i) - ut.row(j)).squaredNorm();
        if (dist < best_d) {
          best_d = dist;
          best = j;
        }
      }
      EXPECT_EQ(best, i);
    }
  }
}

TEST(SampleTask, DisjointDistinctSameDomain) {
  const DomainDataset d = generate(small_spec());
  std::mt19937_64 rng(3);
  const Task t = sample_task(d, 1, 16, 16, rng);
  std::set<int> all(t.support_rows.begin(), t.support_rows.end());
  all.insert(t.query_rows.begin(), t.query_rows.end());
  EXPECT_EQ(all.size(), 32u);
  for (int r : all) EXPECT_EQ(d.domain_ids[static_cast<std::size_t>(r)], 1);
  EXPECT_TRUE(t.support.single_domain());
  EXPECT_TRUE(t.query.single_domain());
  EXPECT_EQ(t.support.size(), 16);
  EXPECT_EQ(t.query.x.row(0), d.x.row(t.query_rows[0]));
}

TEST(SampleTask, SameRngStateSameTask) {
  const DomainDataset d = generate(small_spec());
  std::mt19937_64 a(9), b(9);
  const Task ta = sample_task(d, 2, 5, 7, a);
  const Task tb = sample_task(d, 2, 5, 7, b);
  EXPECT_EQ(ta.support_rows, tb.support_rows);
  EXPECT_EQ(ta.query_rows, tb.query_rows);
}

TEST(SampleTask, Errors) {
  const DomainDataset d = generate(small_spec());
  std::mt19937_64 rng(1);
  EXPECT_THROW(sample_task(d, 0, 40, 40, rng), ConfigError);
  EXPECT_THROW(sample_task(d, 0, 0, 4, rng), ConfigError);
  EXPECT_THROW(sample_task(d, 7, 4, 4, rng), ConfigError);
}

// Over 1000 tasks each concept appears with frequency 1/C; the chi-square
// statistic over concepts stays within mean + 3 sd of its null distribution.
TEST(SampleTask, ConceptFrequenciesUniform) {
  GeneratorSpec g;
  g.num_domains = 2;
  g.num_concepts = 20;
  g.samples_per_domain = 200;
  const DomainDataset d = generate(g);
  std::mt19937_64 rng(17);
  std::vector<double> counts(20, 0);
  double total = 0;
  for (int i = 0; i < 1000; ++i) {
    const Task t = sample_task(d, i % 2, 16, 16, rng);
    for (int c : t.support.concept_ids) ++counts[static_cast<std::size_t>(c)];
    for (int c : t.query.concept_ids) ++counts[static_cast<std::size_t>(c)];
    total += 32;
  }
  const double expected = total / 20;
  double chi2 = 0;
  for (double c : counts) {
    chi2 += (c - expected) * (c - expected) / expected;
    EXPECT_LT(std::abs(c - expected), 3 * std::sqrt(expected));
  }
  const double dof = 19;
  EXPECT_LT(chi2, dof + 3 * std::sqrt(2 * dof));
}

TEST(HoldoutSplit, DisjointConservedAndIdsPreserved) {
  const DomainDataset d = generate(small_spec());
  const std::vector<int> held{2};
  const auto [train, hold] = holdout_split(d, held);
  EXPECT_EQ(train.size() + hold.size(), d.size());
  EXPECT_EQ(train.domains(), (std::vector<int>{0, 1}));
  EXPECT_EQ(hold.domains(), (std::vector<int>{2}));
  EXPECT_EQ(hold.x.row(0), d.x.row(d.rows_of_domain(2)[0]));
}

TEST(HoldoutSplit, Errors) {
  const DomainDataset d = generate(small_spec());
  const std::vector<int> all{0, 1, 2};
  const std::vector<int> unknown{5};
  EXPECT_THROW(holdout_split(d, all), ConfigError);
  EXPECT_THROW(holdout_split(d, unknown), ConfigError);
}

}  // namespace
}  // namespace dcml
