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

#include "dcml/run.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dcml {
namespace {

namespace fs = std::filesystem;

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

// Exclusive ownership of a run directory for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(fs::path path) : path_(std::move(path)) {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (f == nullptr) {
      throw ConfigError("run directory is locked by another process (" +
                        path_.string() + ")");
    }
    std::fclose(f);
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

// Keeps the header and every row whose first column is <= last_iteration.
void truncate_table(const fs::path& path, int last_iteration) {
  std::ifstream in(path);
  if (!in) return;
  std::string out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      out += line + "\n";
      header = false;
      continue;
    }
    const int it = std::atoi(line.substr(0, line.find('\t')).c_str());
    if (it <= last_iteration) out += line + "\n";
  }
  in.close();
  write_file_bytes(path, out);
}

void check_dataset(const TrainConfig& cfg, const DomainDataset& data) {
  if (data.x.cols() != cfg.generator.image_dim ||
      data.t.cols() != cfg.generator.text_dim) {
    throw ConfigError("dataset feature dims do not match the config");
  }
  const std::vector<int> present = data.domains();
  for (int d : present) {
    if (d >= cfg.generator.num_domains) {
      throw ConfigError("dataset has domain " + std::to_string(d) +
                        " but the config declares " +
                        std::to_string(cfg.generator.num_domains) + " domains");
    }
  }
  int trainable = 0;
  for (int d : cfg.train_domains()) {
    trainable += std::find(present.begin(), present.end(), d) != present.end();
  }
  if (trainable < 2) {
    throw ConfigError("dataset must contain at least two training domains");
  }
}

Batch pooled_batch(const std::vector<Task>& tasks) {
  std::vector<Batch> parts;
  for (const Task& t : tasks) {
    parts.push_back(t.support);
    parts.push_back(t.query);
  }
  return Batch::concat(parts);
}

}  // namespace

fs::path resolve_output(const fs::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
    return fs::path(root) / p;
  }
  return p;
}

std::string metrics_header(int num_task_columns) {
  std::string h = "iteration";
  for (int i = 0; i < num_task_columns; ++i) {
    h += "\ttask_loss_" + std::to_string(i);
  }
  return h + "\talign_loss\talign_pairs\ttotal_loss\tgrad_norm\n";
}

std::string metrics_line(const MetricsRow& row) {
  std::string s = std::to_string(row.iteration);
  for (double v : row.metrics.task_losses) s += "\t" + shortest(v);
  s += "\t" + shortest(row.metrics.align_loss);
  s += "\t" + std::to_string(row.metrics.align_pairs);
  s += "\t" + shortest(row.metrics.total);
  s += "\t" + shortest(row.metrics.grad_norm);
  return s + "\n";
}

std::vector<Task> sample_iteration_tasks(const TrainConfig& cfg,
                                         const DomainDataset& data,
                                         int iteration) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                    static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(iteration)};
  std::mt19937_64 rng(seq);
  const std::vector<int> present = data.domains();
  std::vector<int> domains;
  for (int d : cfg.train_domains()) {
    if (std::find(present.begin(), present.end(), d) != present.end()) {
      domains.push_back(d);
    }
  }
  std::vector<int> picks;
  while (static_cast<int>(picks.size()) < cfg.meta.meta_batch_size) {
    std::vector<int> round = domains;
    std::shuffle(round.begin(), round.end(), rng);
    picks.insert(picks.end(), round.begin(), round.end());
  }
  picks.resize(static_cast<std::size_t>(cfg.meta.meta_batch_size));
  std::vector<Task> tasks;
  for (int d : picks) {
    tasks.push_back(sample_task(data, d, cfg.meta.support_size,
                                cfg.meta.query_size, rng));
  }
  return tasks;
}

DomainDataset load_or_generate(const TrainConfig& cfg) {
  if (!cfg.data.dataset.empty()) return load_dataset(cfg.data.dataset);
  return generate(cfg.generator);
}

TrainingRun train(const TrainConfig& cfg, const DomainDataset& data,
                  const TrainOptions& options) {
  cfg.validate();
  check_dataset(cfg, data);
  const ModelSpec spec = cfg.model_spec();
  const std::string hash = config_hash(cfg);

  TrainingRun run;
  run.params = init_params(spec, cfg.seed);
  Optimizer optimizer(cfg.meta.outer, run.params);
  int start = 1;
  if (options.resume) {
    const Checkpoint ckpt = load_checkpoint(*options.resume);
    check_config_hash(ckpt, hash, options.allow_config_mismatch);
    if (!ckpt.params.congruent(run.params)) {
      throw ConfigError("resume checkpoint parameters do not match the model");
    }
    run.params = ckpt.params;
    if (!ckpt.optimizer_m.empty()) {
      optimizer.restore(ckpt.optimizer_steps, ckpt.optimizer_m,
                        ckpt.optimizer_v);
    }
    start = static_cast<int>(ckpt.iteration) + 1;
  }

  const bool write = !options.run_dir.empty();
  const fs::path dir = options.run_dir;
  std::optional<RunLock> lock;
  std::ofstream metrics;
  std::ofstream timing;
  std::ofstream evals;
  const int task_columns =
      cfg.mode == TrainMode::kMeta ? cfg.meta.meta_batch_size : 1;
  if (write) {
    fs::create_directories(dir / "checkpoints");
    lock.emplace(dir / "run.lock");
    write_file_bytes(dir / "config.yaml", emit_config(cfg));
    const bool resuming = options.resume.has_value();
    auto open_table = [&](std::ofstream& out, const fs::path& path,
                          const std::string& header) {
      if (resuming && fs::exists(path)) {
        truncate_table(path, start - 1);
        out.open(path, std::ios::app);
      } else {
        out.open(path, std::ios::trunc);
        out << header;
      }
      if (!out) throw ConfigError("cannot write " + path.string());
    };
    open_table(metrics, dir / "metrics.tsv", metrics_header(task_columns));
    open_table(timing, dir / "timing.tsv", "iteration\twall_seconds\n");
    if (cfg.eval.every > 0) {
      open_table(evals, dir / "eval.tsv",
                 "iteration\tdomain_gap\theldout_domain\trecall_at_1_k0\t"
                 "recall_at_1_kmax\n");
    }
  }

  auto checkpoint = [&](int iteration, const fs::path& path) {
    Checkpoint ckpt;
    ckpt.config_hash = hash;
    ckpt.config_text = emit_config(cfg);
    ckpt.iteration = iteration;
    ckpt.params = run.params;
    ckpt.optimizer_steps = optimizer.steps();
    ckpt.optimizer_m = optimizer.first_moment();
    ckpt.optimizer_v = optimizer.second_moment();
    save_checkpoint(path, ckpt);
  };

  std::optional<std::pair<DomainDataset, DomainDataset>> split;
  if (cfg.eval.every > 0) {
    std::vector<int> held;
    for (int d : cfg.data.heldout_domains) {
      const auto present = data.domains();
      if (std::find(present.begin(), present.end(), d) != present.end()) {
        held.push_back(d);
      }
    }
    split = holdout_split(data, held);
  }

  for (int it = start; it <= cfg.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<Task> tasks = sample_iteration_tasks(cfg, data, it);
    const AlignBatches align = alignment_batches(tasks);
    MetricsRow row;
    row.iteration = it;
    if (cfg.mode == TrainMode::kMeta) {
      row.metrics = meta_step(run.params, tasks, align, spec, cfg.meta, optimizer);
    } else {
      AlignmentLoss diag;
      {
        ad::NoGradGuard no_grad;
        diag = alignment_objective(to_leaves(run.params), spec, align);
      }
      row.metrics =
          baseline_step(run.params, pooled_batch(tasks), spec, cfg.meta, optimizer);
      row.metrics.align_loss = diag.loss.item();
      row.metrics.align_pairs = diag.num_pairs;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (write) {
      metrics << metrics_line(row) << std::flush;
      timing << it << "\t" << std::setprecision(6) << seconds << "\n" << std::flush;
      if (cfg.io.checkpoint_every > 0 && it % cfg.io.checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof(name), "ckpt_%06d.bin", it);
        checkpoint(it, dir / "checkpoints" / name);
      }
      if (cfg.eval.every > 0 && it % cfg.eval.every == 0) {
        const double gap = domain_gap(run.params, spec, split->first);
        evals << it << "\t" << shortest(gap);
        if (!split->second.domains().empty()) {
          const int d = split->second.domains().front();
          const ParamSet prepared = with_unseen_domains(
              run.params, cfg.data.heldout_domains, cfg.train_domains());
          const AdaptationCurve curve =
              evaluate_domain(prepared, spec, data, d, cfg.meta, cfg.eval.ks,
                              cfg.eval.tasks, cfg.seed);
          evals << "\t" << d << "\t"
                << shortest(curve.points.front().report.recall_at_1) << "\t"
                << shortest(curve.points.back().report.recall_at_1);
        }
        evals << "\n" << std::flush;
      }
    }
    if (options.on_row) options.on_row(row);
    run.history.push_back(std::move(row));
    run.last_iteration = it;
  }

  if (write) checkpoint(run.last_iteration, dir / "final.ckpt");
  return run;
}

EvalOutput evaluate_checkpoints(const EvalOptions& options) {
  if (options.checkpoints.empty()) throw ConfigError("eval: no checkpoint given");
  const DomainDataset data = load_dataset(options.dataset);
  const std::vector<int> present = data.domains();

  // Validate everything before computing or writing anything.
  struct Loaded {
    std::string label;
    Checkpoint ckpt;
    TrainConfig cfg;
  };
  std::vector<Loaded> runs;
  for (std::size_t i = 0; i < options.checkpoints.size(); ++i) {
    Loaded l;
    l.label = i < options.labels.size() ? options.labels[i]
                                        : options.checkpoints[i].stem().string();
    l.ckpt = load_checkpoint(options.checkpoints[i]);
    l.cfg = parse_config(l.ckpt.config_text);
    if (!l.ckpt.params.congruent(init_params(l.cfg.model_spec(), 0))) {
      throw ConfigError("eval: checkpoint parameters do not match its config");
    }
    runs.push_back(std::move(l));
  }
  const TrainConfig& primary = runs.front().cfg;
  const std::vector<int> heldout =
      options.heldout.value_or(primary.data.heldout_domains);
  for (int d : heldout) {
    if (std::find(present.begin(), present.end(), d) == present.end()) {
      throw ConfigError("eval: unknown domain id " + std::to_string(d));
    }
  }
  const std::vector<int> ks = options.ks.value_or(primary.eval.ks);
  if (ks.empty() || ks.front() != 0 || !std::is_sorted(ks.begin(), ks.end()) ||
      std::adjacent_find(ks.begin(), ks.end()) != ks.end()) {
    throw ConfigError("eval: ks must be strictly ascending from 0");
  }
  const int tasks = options.tasks.value_or(primary.eval.tasks);
  if (tasks < 1) throw ConfigError("eval: tasks must be >= 1");
  for (const Loaded& l : runs) {
    if (data.x.cols() != l.cfg.generator.image_dim ||
        data.t.cols() != l.cfg.generator.text_dim) {
      throw ConfigError("eval: dataset dims do not match checkpoint config");
    }
  }

  EvalOutput out;
  for (const Loaded& l : runs) {
    const ModelSpec spec = l.cfg.model_spec();
    const std::uint64_t seed = options.seed.value_or(l.cfg.seed);
    const ParamSet theta = with_unseen_domains(
        l.ckpt.params, l.cfg.data.heldout_domains, l.cfg.train_domains());
    for (int d : heldout) {
      const AdaptationCurve curve = evaluate_domain(
          theta, spec, data, d, l.cfg.meta, ks, tasks, seed + static_cast<std::uint64_t>(d));
      for (const auto& p : curve.points) out.rows.push_back({l.label, d, p});
    }
    out.domain_gaps.emplace_back(l.label, domain_gap(theta, spec, data));
  }

  if (!options.out_dir.empty()) {
    write_file_bytes(options.out_dir / "eval_report.tsv", eval_table(out));
    write_file_bytes(options.out_dir / "eval_summary.txt", eval_summary(out));
  }
  return out;
}

std::string eval_table(const EvalOutput& out) {
  std::string s =
      "run\tdomain\tk\tdirection\trecall_at_1\trecall_at_5\tmedian_rank\tn_queries\n";
  for (const auto& r : out.rows) {
    const RetrievalReport& rep = r.point.report;
    s += r.run + "\t" + std::to_string(r.domain) + "\t" +
         std::to_string(r.point.k) + "\t" + to_string(rep.direction) + "\t" +
         shortest(rep.recall_at_1) + "\t" + shortest(rep.recall_at_5) + "\t" +
         shortest(rep.median_rank) + "\t" + std::to_string(rep.n_queries) + "\n";
  }
  return s;
}

std::string eval_summary(const EvalOutput& out) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(4);
  o << "Held-out domain retrieval (image -> text)\n";
  o << std::left << std::setw(16) << "run" << std::setw(8) << "domain"
    << std::setw(6) << "k" << std::setw(12) << "recall@1" << std::setw(12)
    << "recall@5" << "median_rank\n";
  for (const auto& r : out.rows) {
    o << std::setw(16) << r.run << std::setw(8) << r.domain << std::setw(6)
      << r.point.k << std::setw(12) << r.point.report.recall_at_1
      << std::setw(12) << r.point.report.recall_at_5
      << r.point.report.median_rank << "\n";
  }
  o << "\nDomain gap (mean squared same-concept cross-domain distance)\n";
  for (const auto& [run, gap] : out.domain_gaps) {
    o << std::setw(16) << run << gap << "\n";
  }
  return o.str();
}

}  // namespace dcml
