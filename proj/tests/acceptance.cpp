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

// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "dcml/config.hpp"
#include "dcml/gradcheck.hpp"
#include "dcml/losses.hpp"
#include "dcml/persistence.hpp"
#include "dcml/run.hpp"

namespace fs = std::filesystem;
using namespace dcml;

namespace {

int failures = 0;

void report(int id, const std::string& title, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " [" << id << "] " << title << ": " << detail
            << std::endl;
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(4);
  o << v;
  return o.str();
}

void gradient_oracle(const GradcheckReport& r) {
  double prim = 0, meta = 0;
  bool ok = r.seconds < 120.0;
  for (const auto& e : r.entries) {
    if (e.name.rfind("meta/second_order", 0) == 0) {
      meta = std::max(meta, e.value);
      ok = ok && e.value < 1e-3;
    } else if (e.name.rfind("primitive/", 0) == 0 || e.name.rfind("loss/", 0) == 0) {
      prim = std::max(prim, e.value);
      ok = ok && e.value < 1e-4;
    }
  }
  report(1, "gradient oracle suite", ok,
         "max rel err primitives/losses " + fmt(prim) + " (< 1e-4), meta K=1..3 " + fmt(meta) +
             " (< 1e-3), " + fmt(r.seconds) + " s (< 120 s)");
}

void closed_form_losses() {
  double worst = 0;
  {
    const Tensor z = Tensor::Constant(1, 3, 1 / std::sqrt(3.0));
    worst = std::max(worst, std::abs(contrastive_loss(ad::constant(z), ad::constant(z), {}).item()));
  }
  for (int n : {2, 4, 8}) {
    for (double tau : {0.1, 1.0}) {
      const Tensor z = Tensor::Constant(n, 4, 0.5);
      const double l = contrastive_loss(ad::constant(z), ad::constant(z), ContrastiveConfig{tau}).item();
      worst = std::max(worst, std::abs(l - std::log(static_cast<double>(n))));
    }
  }
  const Tensor eye = Tensor::Identity(2, 2);
  const double hand = contrastive_loss(ad::constant(eye), ad::constant(eye), ContrastiveConfig{1.0}).item();
  const double hand_err = std::abs(hand - std::log1p(std::exp(-1.0)));
  worst = std::max(worst, hand_err);
  report(2, "closed-form contrastive values", worst < 1e-10,
         "N=1 -> 0, uniform -> ln N, N=2 hand case " + fmt(hand) + "; max err " + fmt(worst) +
             " (< 1e-10)");
}

void degenerate_equivalence() {
  const TrainConfig cfg;
  const ModelSpec spec = cfg.model_spec();
  const DomainDataset data = generate(cfg.generator);
  std::mt19937_64 rng(11);
  const std::vector<Task> tasks{sample_task(data, 1, cfg.meta.support_size, cfg.meta.query_size, rng)};
  MetaConfig mc = cfg.meta;
  mc.inner_steps = 0;
  mc.align.weight = 0.0;
  ParamSet a = init_params(spec, cfg.seed);
  ParamSet b = a;
  const ParamSet before = a;
  Optimizer oa(mc.outer, a), ob(mc.outer, b);
  double worst = 0;
  for (int step = 0; step < 3; ++step) {
    meta_step(a, tasks, alignment_batches(tasks), spec, mc, oa);
    baseline_step(b, tasks[0].query, spec, mc, ob);
    for (std::size_t k = 0; k < a.size(); ++k) {
      worst = std::max(worst, (a[k].value - b[k].value).cwiseAbs().maxCoeff());
    }
  }
  const bool moved = !a.identical(before);
  report(3, "K=0, lambda=0 meta_step == baseline_step on query", moved && worst < 1e-12,
         "max abs param diff over 3 steps " + fmt(worst) + " (< 1e-12)");
}

void small_alpha(const GradcheckReport& r) {
  double small = -1, large = -1;
  for (const auto& e : r.entries) {
    if (e.name == "meta/first_vs_second_alpha_1e-6") small = e.value;
    if (e.name.rfind("meta/first_vs_second_alpha_0.1", 0) == 0) large = e.value;
  }
  report(4, "small inner-lr limit", small >= 0 && small < 1e-3 && large > 1e-3,
         "rel diff first vs second order: alpha=1e-6 " + fmt(small) + " (< 1e-3), alpha=0.1 " +
             fmt(large) + " (> 1e-3)");
}

void identity_at_init() {
  const TrainConfig cfg;
  const ModelSpec spec = cfg.model_spec();
  const VarSet v = to_leaves(init_params(spec, cfg.seed));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  Tensor z(32, spec.embed_dim());
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = n(rng);
  const Tensor expected = z.rowwise().normalized();
  double worst = 0;
  for (int d = 0; d < spec.domains.num_domains; ++d) {
    const std::vector<int> ids(32, d);
    for (Modality m : {Modality::kImage, Modality::kText}) {
      const Tensor out =
          modulate(ad::constant(z), ids, v.at(kDomainTableName), film_modulator(v, m)).value();
      worst = std::max(worst, (out - expected).cwiseAbs().maxCoeff());
    }
  }
  report(5, "identity modulation at init", worst < 1e-12,
         "max |modulate(z,d) - z/|z||| over all domains " + fmt(worst) + " (< 1e-12)");
}

struct RunOutcome {
  fs::path dir;
  double seconds;
};

RunOutcome train_run(const TrainConfig& cfg, const DomainDataset& data, const fs::path& dir) {
  const auto t = std::chrono::steady_clock::now();
  fs::remove_all(dir);
  TrainOptions options;
  options.run_dir = dir;
  train(cfg, data, options);
  return {dir, seconds_since(t)};
}

void domain_shift_experiment(const fs::path& root, const fs::path& dataset,
                             const RunOutcome& with_align) {
  const auto t = std::chrono::steady_clock::now();
  TrainConfig off;
  off.meta.align.weight = 0.0;
  const RunOutcome no_align = train_run(off, load_dataset(dataset), root / "lambda0");

  EvalOptions opt;
  opt.checkpoints = {with_align.dir / "final.ckpt", no_align.dir / "final.ckpt"};
  opt.labels = {"lambda0.1", "lambda0"};
  opt.dataset = dataset;
  opt.ks = std::vector<int>{0, 1, 3, 5};
  opt.out_dir = root / "eval";
  const EvalOutput out = evaluate_checkpoints(opt);
  std::cout << eval_summary(out);

  double r0 = -1, r5 = -1;
  for (const auto& row : out.rows) {
    if (row.run != "lambda0.1") continue;
    if (row.point.k == 0) r0 = row.point.report.recall_at_1;
    if (row.point.k == 5) r5 = row.point.report.recall_at_1;
  }
  const double gap_on = out.domain_gaps.at(0).second;
  const double gap_off = out.domain_gaps.at(1).second;
  const double total = with_align.seconds + seconds_since(t);
  report(6, "desk-scale domain-shift experiment (a) adaptation",
         r5 > r0 && total < 600.0,
         "held-out recall@1 K=5 " + fmt(r5) + " > K=0 " + fmt(r0));
  report(6, "desk-scale domain-shift experiment (b) alignment",
         gap_on < gap_off && total < 600.0,
         "domain_gap lambda=0.1 " + fmt(gap_on) + " < lambda=0 " + fmt(gap_off) + ", total " +
             fmt(total) + " s (< 600 s)");
}

void reproducibility(const fs::path& root, const DomainDataset& data, const RunOutcome& first) {
  const TrainConfig cfg;
  const RunOutcome second = train_run(cfg, data, root / "repeat");
  const bool metrics_same = read_file_bytes(first.dir / "metrics.tsv") ==
                            read_file_bytes(second.dir / "metrics.tsv");
  const std::string bytes = read_file_bytes(first.dir / "final.ckpt");
  const Checkpoint loaded = decode_checkpoint(bytes);
  save_checkpoint(root / "resaved.ckpt", loaded);
  const bool ckpt_same = read_file_bytes(root / "resaved.ckpt") == bytes &&
                         bytes == read_file_bytes(second.dir / "final.ckpt");
  const bool params_same = loaded.params.identical(decode_checkpoint(encode_checkpoint(loaded)).params);
  report(7, "reproducibility", metrics_same && ckpt_same && params_same,
         std::string("metrics.tsv byte-identical: ") + (metrics_same ? "yes" : "no") +
             ", checkpoint save/load/save byte-identical: " + (ckpt_same ? "yes" : "no"));
}

int cli_exit(const std::string& args) {
  const std::string cmd = std::string(DCML_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void mutation_sensitivity() {
  // Ops that own a vector-Jacobian product. Composites such as sum_all,
  // softmax_cross_entropy or squared_difference are built from these.
  const std::vector<std::string> ops{
      "add", "sub", "mul", "div", "neg", "scale", "add_scalar", "tanh", "relu", "exp", "log",
      "matmul", "transpose", "sum_rows", "sum_cols", "broadcast_rows", "broadcast_cols",
      "mul_col", "div_col", "row_norm", "log_softmax_rows", "gather_rows",
      "scatter_add_rows"};
  int caught = 0;
  std::string missed;
  for (const std::string& op : ops) {
    ad::testing::set_gradient_fault(op);
    const bool detected = !run_gradcheck(GradcheckScale::kTiny).passed();
    ad::testing::set_gradient_fault("");
    if (detected) {
      ++caught;
    } else {
      missed += " " + op;
    }
  }
  const int clean = cli_exit("gradcheck --scale tiny");
  const int faulty = cli_exit("gradcheck --scale tiny --inject-fault tanh");
  report(8, "mutation sensitivity",
         caught == static_cast<int>(ops.size()) && clean == 0 && faulty == 2,
         "sign-flipped VJP detected for " + std::to_string(caught) + "/" +
             std::to_string(ops.size()) + " ops" + (missed.empty() ? "" : " (missed:" + missed + ")") +
             "; cli exit clean=" + std::to_string(clean) + " faulty=" + std::to_string(faulty));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1])
                                 : fs::temp_directory_path() / "dcml_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  const GradcheckReport gc = run_gradcheck(GradcheckScale::kTiny);
  std::cout << gc.table();
  gradient_oracle(gc);
  closed_form_losses();
  degenerate_equivalence();
  small_alpha(gc);
  identity_at_init();

  const TrainConfig cfg;  // seed 7, default config
  const DomainDataset data = generate(cfg.generator);
  save_dataset(root / "dataset.bin", data);
  const RunOutcome main_run = train_run(cfg, data, root / "lambda0.1");
  domain_shift_experiment(root, root / "dataset.bin", main_run);
  reproducibility(root, data, main_run);
  mutation_sensitivity();

  std::cout << (failures == 0 ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL") << std::endl;
  return failures;
}
