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

#include "dcml/gradcheck.hpp"

#include <chrono>
#include <iomanip>
#include <random>
#include <sstream>

#include "dcml/losses.hpp"
#include "dcml/synthetic_data.hpp"

namespace dcml {
namespace {

using VarFn = std::function<ad::Var(const std::vector<ad::Var>&)>;

enum class Range { kAny, kPositive, kAwayFromZero };

struct InputSpec {
  Eigen::Index rows;
  Eigen::Index cols;
  Range range = Range::kAny;
};

struct PrimitiveCase {
  std::string name;
  std::vector<InputSpec> inputs;
  VarFn fn;
};

Tensor random_input(const InputSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> any(-1.0, 1.0);
  std::uniform_real_distribution<double> pos(0.5, 2.0);
  std::uniform_real_distribution<double> mag(0.05, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor t(spec.rows, spec.cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    switch (spec.range) {
      case Range::kAny: t.data()[i] = any(rng); break;
      case Range::kPositive: t.data()[i] = pos(rng); break;
      case Range::kAwayFromZero:
        t.data()[i] = (sign(rng) ? 1.0 : -1.0) * mag(rng);
        break;
    }
  }
  return t;
}

// Analytic vs. numeric gradient of sum(fn(inputs) * weights) for one draw.
double check_once(const VarFn& fn, const std::vector<Tensor>& inputs,
                  std::mt19937_64& rng) {
  std::vector<ad::Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(ad::parameter(t));
  const ad::Var out = fn(leaves);
  const Tensor weights =
      random_input({out.rows(), out.cols(), Range::kAny}, rng);
  const ad::Var loss = ad::sum_all(ad::mul(out, ad::constant(weights)));
  const std::vector<ad::Var> grads = ad::grad(loss, leaves);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto value_at = [&](const Tensor& x) {
      ad::NoGradGuard no_grad;
      std::vector<ad::Var> args;
      for (std::size_t j = 0; j < inputs.size(); ++j) {
        args.push_back(ad::constant(j == k ? x : inputs[j]));
      }
      return fn(args).value().cwiseProduct(weights).sum();
    };
    const Tensor numeric =
        central_difference<double>(value_at, inputs[k], kFiniteDifferenceStep);
    worst = std::max(worst, max_relative_error<double>(grads[k].value(), numeric,
                                                       kRelativeErrorFloor));
  }
  return worst;
}

std::vector<PrimitiveCase> primitive_cases(Eigen::Index m, Eigen::Index n) {
  using V = std::vector<ad::Var>;
  const InputSpec mat{m, n};
  const InputSpec row{1, n};
  const InputSpec col{m, 1};
  std::vector<int> ids;
  for (Eigen::Index i = 0; i < m + 2; ++i) ids.push_back(static_cast<int>((i * 7) % m));
  std::vector<int> targets;
  for (Eigen::Index i = 0; i < m; ++i) targets.push_back(static_cast<int>(i % n));

  return {
      {"add", {mat, mat}, [](const V& v) { return ad::add(v[0], v[1]); }},
      {"add_broadcast", {mat, row}, [](const V& v) { return ad::add(v[0], v[1]); }},
      {"sub", {mat, mat}, [](const V& v) { return ad::sub(v[0], v[1]); }},
      {"sub_broadcast", {row, mat}, [](const V& v) { return ad::sub(v[0], v[1]); }},
      {"mul", {mat, mat}, [](const V& v) { return ad::mul(v[0], v[1]); }},
      {"div", {mat, {m, n, Range::kAwayFromZero}},
       [](const V& v) { return ad::div(v[0], v[1]); }},
      {"neg", {mat}, [](const V& v) { return ad::neg(v[0]); }},
      {"scale", {mat}, [](const V& v) { return ad::scale(v[0], -1.7); }},
      {"add_scalar", {mat}, [](const V& v) { return ad::add_scalar(v[0], 0.3); }},
      {"tanh", {mat}, [](const V& v) { return ad::tanh(v[0]); }},
      {"relu", {{m, n, Range::kAwayFromZero}},
       [](const V& v) { return ad::relu(v[0]); }},
      {"exp", {mat}, [](const V& v) { return ad::exp(v[0]); }},
      {"log", {{m, n, Range::kPositive}}, [](const V& v) { return ad::log(v[0]); }},
      {"matmul", {mat, {n, m}}, [](const V& v) { return ad::matmul(v[0], v[1]); }},
      {"transpose", {mat}, [](const V& v) { return ad::transpose(v[0]); }},
      {"sum_rows", {mat}, [](const V& v) { return ad::sum_rows(v[0]); }},
      {"sum_cols", {mat}, [](const V& v) { return ad::sum_cols(v[0]); }},
      {"sum_all", {mat}, [](const V& v) { return ad::sum_all(v[0]); }},
      {"mean_all", {mat}, [](const V& v) { return ad::mean_all(v[0]); }},
      {"broadcast_rows", {row},
       [m](const V& v) { return ad::broadcast_rows(v[0], m); }},
      {"broadcast_cols", {col},
       [n](const V& v) { return ad::broadcast_cols(v[0], n); }},
      {"mul_col", {mat, col}, [](const V& v) { return ad::mul_col(v[0], v[1]); }},
      {"div_col", {mat, {m, 1, Range::kAwayFromZero}},
       [](const V& v) { return ad::div_col(v[0], v[1]); }},
      {"row_norm", {{m, n, Range::kAwayFromZero}},
       [](const V& v) { return ad::row_norm(v[0]); }},
      {"l2_normalize_rows", {{m, n, Range::kAwayFromZero}},
       [](const V& v) { return ad::l2_normalize_rows(v[0]); }},
      {"log_softmax_rows", {mat},
       [](const V& v) { return ad::log_softmax_rows(v[0], 0.5); }},
      {"softmax_rows", {mat},
       [](const V& v) { return ad::softmax_rows(v[0], 0.7); }},
      {"softmax_cross_entropy", {mat},
       [targets](const V& v) { return ad::softmax_cross_entropy(v[0], targets); }},
      {"squared_difference", {mat, mat},
       [](const V& v) { return ad::squared_difference(v[0], v[1]); }},
      {"gather_rows", {mat},
       [ids](const V& v) { return ad::gather_rows(v[0], ids); }},
      {"scatter_add_rows", {{static_cast<Eigen::Index>(ids.size()), n}},
       [ids, m](const V& v) { return ad::scatter_add_rows(v[0], ids, m); }},
  };
}

std::vector<PrimitiveCase> loss_cases(Eigen::Index m, Eigen::Index d) {
  using V = std::vector<ad::Var>;
  const InputSpec emb{m, d, Range::kAwayFromZero};
  ContrastiveConfig i2t;
  i2t.temperature = 0.1;
  ContrastiveConfig sym;
  sym.temperature = 0.5;
  sym.direction = ContrastiveDirection::kSymmetric;
  std::vector<int> concepts;
  for (Eigen::Index i = 0; i < m; ++i) concepts.push_back(static_cast<int>(i % 3));
  return {
      {"contrastive_loss(i2t)", {emb, emb},
       [i2t](const V& v) {
         return contrastive_loss(ad::l2_normalize_rows(v[0]),
                                 ad::l2_normalize_rows(v[1]), i2t);
       }},
      {"contrastive_loss(symmetric)", {emb, emb},
       [sym](const V& v) {
         return contrastive_loss(ad::l2_normalize_rows(v[0]),
                                 ad::l2_normalize_rows(v[1]), sym);
       }},
      {"alignment_loss", {emb, emb, emb},
       [concepts](const V& v) {
         std::map<int, ConceptEmbeddings> by;
         for (int k = 0; k < 3; ++k) by.emplace(k, ConceptEmbeddings{v[static_cast<std::size_t>(k)], concepts});
         return alignment_loss(by).loss;
       }},
      {"total_loss", {{1, 1}, {1, 1}, {1, 1}},
       [](const V& v) {
         const std::vector<ad::Var> meta{v[0], v[1]};
         return total_loss(meta, v[2], 0.3);
       }},
  };
}

ParamSet perturbed_params(const ModelSpec& spec, std::mt19937_64& rng,
                          double stddev) {
  ParamSet p = init_params(spec, rng());
  std::normal_distribution<double> noise(0.0, stddev);
  for (auto& e : p) {
    for (Eigen::Index i = 0; i < e.value.size(); ++i) e.value.data()[i] += noise(rng);
  }
  return p;
}

struct MetaFixture {
  ModelSpec spec;
  ParamSet theta;
  std::vector<Task> tasks;
};

MetaFixture meta_fixture(const ModelSpec& spec, int rows, std::mt19937_64& rng) {
  GeneratorSpec g;
  g.num_domains = spec.domains.num_domains;
  g.num_concepts = 3;
  g.latent_dim = 2;
  g.image_dim = spec.image.input_dim;
  g.text_dim = spec.text.input_dim;
  g.domain_shift = 0.5;
  g.noise_std = 0.1;
  g.samples_per_domain = 4 * rows;
  g.seed = rng();
  const DomainDataset data = generate(g);
  MetaFixture f{spec, perturbed_params(spec, rng, 0.3), {}};
  for (int d = 0; d < 2; ++d) {
    f.tasks.push_back(sample_task(data, d, rows, rows, rng));
  }
  return f;
}

double meta_check(const MetaFixture& f, const MetaConfig& cfg, bool with_align) {
  const AlignBatches align =
      with_align ? alignment_batches(f.tasks) : AlignBatches{};
  const ParamSet analytic =
      meta_gradient(f.theta, f.tasks, align, f.spec, cfg).gradient;
  const ParamSet numeric = finite_difference_gradient(
      [&](const ParamSet& p) {
        return meta_objective_value(p, f.tasks, align, f.spec, cfg);
      },
      f.theta);
  return max_relative_error(analytic, numeric);
}

}  // namespace

ParamSet finite_difference_gradient(
    const std::function<double(const ParamSet&)>& f, const ParamSet& at,
    double h) {
  ParamSet probe = at;
  ParamSet out = at.zeros_like();
  for (std::size_t k = 0; k < probe.size(); ++k) {
    Tensor& x = probe[k].value;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double saved = x.data()[i];
      x.data()[i] = saved + h;
      const double plus = f(probe);
      x.data()[i] = saved - h;
      const double minus = f(probe);
      x.data()[i] = saved;
      out[k].value.data()[i] = (plus - minus) / (2.0 * h);
    }
  }
  return out;
}

double max_relative_error(const ParamSet& analytic, const ParamSet& numeric,
                          double floor) {
  if (!analytic.congruent(numeric)) {
    throw ConfigError("max_relative_error: sets are not congruent");
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    worst = std::max(worst, max_relative_error<double>(analytic[k].value,
                                                       numeric[k].value, floor));
  }
  return worst;
}

double relative_difference(const ParamSet& a, const ParamSet& b) {
  if (!a.congruent(b)) throw ConfigError("relative_difference: not congruent");
  double diff = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].value.size() > 0) {
      diff = std::max(diff, (a[k].value - b[k].value).cwiseAbs().maxCoeff());
    }
  }
  return diff / b.max_abs();
}

double meta_objective_value(const ParamSet& theta, std::span<const Task> tasks,
                            const AlignBatches& align, const ModelSpec& spec,
                            const MetaConfig& cfg) {
  const VarSet leaves = to_leaves(theta);
  std::vector<ad::Var> query;
  for (const Task& task : tasks) {
    const Adaptation a = adapt(leaves, task, spec, cfg, cfg.inner_steps,
                               GradientOrder::kFirst);
    ad::NoGradGuard no_grad;
    const PairEmbeddings emb = embed_batch(task.query, a.params, spec);
    query.push_back(
        ad::constant(contrastive_loss(emb.image, emb.text, cfg.contrastive).value()));
  }
  ad::NoGradGuard no_grad;
  ad::Var align_loss = ad::constant(Tensor::Zero(1, 1));
  if (!align.empty()) align_loss = alignment_objective(leaves, spec, align).loss;
  return total_loss(query, align_loss, cfg.align.weight, cfg.task_reduction).item();
}

ModelSpec tiny_model_spec() {
  ModelSpec spec;
  spec.image = {2, {2}, 2, Activation::kTanh};
  spec.text = {2, {2}, 2, Activation::kTanh};
  spec.domains = {2, 1};
  return spec;
}

bool GradcheckReport::passed() const {
  for (const auto& e : entries) {
    if (!e.passed()) return false;
  }
  return true;
}

std::string GradcheckReport::table() const {
  std::ostringstream o;
  o << std::left << std::setw(44) << "check" << std::setw(14) << "value"
    << std::setw(14) << "tolerance" << "status\n";
  for (const auto& e : entries) {
    std::ostringstream v;
    v << std::scientific << std::setprecision(3) << e.value;
    std::ostringstream t;
    t << (e.require_above ? "> " : "< ") << std::scientific
      << std::setprecision(0) << e.tolerance;
    o << std::setw(44) << e.name << std::setw(14) << v.str() << std::setw(14)
      << t.str() << (e.passed() ? "PASS" : "FAIL") << "\n";
  }
  o << "elapsed " << std::fixed << std::setprecision(2) << seconds << " s\n";
  return o.str();
}

GradcheckReport run_gradcheck(GradcheckScale scale, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const bool tiny = scale == GradcheckScale::kTiny;
  const int trials = tiny ? 100 : 200;
  const Eigen::Index m = tiny ? 3 : 5;
  const Eigen::Index n = tiny ? 4 : 6;
  std::mt19937_64 rng(seed);
  GradcheckReport report;

  auto run_cases = [&](const std::vector<PrimitiveCase>& cases,
                       const std::string& prefix) {
    for (const auto& c : cases) {
      double worst = 0.0;
      for (int t = 0; t < trials; ++t) {
        std::vector<Tensor> inputs;
        for (const auto& in : c.inputs) inputs.push_back(random_input(in, rng));
        worst = std::max(worst, check_once(c.fn, inputs, rng));
      }
      report.entries.push_back({prefix + c.name, worst, kPrimitiveTolerance});
    }
  };
  run_cases(primitive_cases(m, n), "primitive/");
  run_cases(loss_cases(tiny ? 4 : 6, tiny ? 3 : 5), "loss/");

  // Full composed contrastive loss through encoders, FiLM and the table.
  {
    const ModelSpec spec = tiny ? tiny_model_spec() : [] {
      ModelSpec s;
      s.image = {4, {6}, 4, Activation::kTanh};
      s.text = {3, {5}, 4, Activation::kTanh};
      s.domains = {3, 2};
      return s;
    }();
    const MetaFixture f = meta_fixture(spec, tiny ? 4 : 6, rng);
    MetaConfig cfg;
    const Batch batch = f.tasks.front().query;
    const ParamSet analytic = [&] {
      const VarSet leaves = to_leaves(f.theta);
      const PairEmbeddings emb = embed_batch(batch, leaves, spec);
      return backward_values(contrastive_loss(emb.image, emb.text, cfg.contrastive),
                             leaves);
    }();
    const ParamSet numeric = finite_difference_gradient(
        [&](const ParamSet& p) {
          ad::NoGradGuard no_grad;
          const PairEmbeddings emb = embed_batch(batch, to_leaves(p), spec);
          return contrastive_loss(emb.image, emb.text, cfg.contrastive).item();
        },
        f.theta);
    report.entries.push_back({"loss/contrastive_through_model",
                              max_relative_error(analytic, numeric),
                              kPrimitiveTolerance});

    // Unrolled second-order meta-gradients.
    for (int k = 1; k <= 3; ++k) {
      MetaConfig meta;
      meta.inner_steps = k;
      meta.inner_lr = 0.1;
      meta.order = GradientOrder::kSecond;
      meta.align.weight = 0.0;
      report.entries.push_back({"meta/second_order_K" + std::to_string(k),
                                meta_check(f, meta, false), kMetaTolerance});
    }
    MetaConfig with_align;
    with_align.inner_steps = 2;
    with_align.inner_lr = 0.1;
    with_align.order = GradientOrder::kSecond;
    with_align.align.weight = 0.1;
    report.entries.push_back({"meta/second_order_K2_with_alignment",
                              meta_check(f, with_align, true), kMetaTolerance});

    // First vs. second order.
    auto order_gap = [&](double alpha) {
      MetaConfig a;
      a.inner_steps = 1;
      a.inner_lr = alpha;
      a.align.weight = 0.0;
      a.order = GradientOrder::kFirst;
      const ParamSet first = meta_gradient(f.theta, f.tasks, {}, spec, a).gradient;
      a.order = GradientOrder::kSecond;
      const ParamSet second = meta_gradient(f.theta, f.tasks, {}, spec, a).gradient;
      return relative_difference(first, second);
    };
    report.entries.push_back({"meta/first_vs_second_alpha_1e-6",
                              order_gap(1e-6), kOrderAgreementTolerance});
    report.entries.push_back({"meta/first_vs_second_alpha_0.1 (differ)",
                              order_gap(0.1), kOrderAgreementTolerance, true});
  }

  report.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  return report;
}

}  // namespace dcml
