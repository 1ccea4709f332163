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

// dcml: generate | train | eval | gradcheck.
// Exit codes: 0 ok, 1 invalid input, 2 numerical failure or failed gradcheck.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dcml/config.hpp"
#include "dcml/errors.hpp"
#include "dcml/gradcheck.hpp"
#include "dcml/persistence.hpp"
#include "dcml/run.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitNumerical = 2;

fs::path dataset_path(const dcml::TrainConfig& cfg,
                      const std::optional<std::string>& out) {
  if (out) return dcml::resolve_output(*out);
  if (!cfg.data.dataset.empty()) return dcml::resolve_output(cfg.data.dataset);
  return dcml::resolve_output(fs::path(cfg.io.output_dir) / "dataset.bin");
}

int cmd_generate(const std::string& config_path,
                 const std::optional<std::string>& out) {
  const dcml::TrainConfig cfg = dcml::load_config(config_path);
  const fs::path path = dataset_path(cfg, out);
  const dcml::DomainDataset data = dcml::generate(cfg.generator);
  dcml::save_dataset(path, data);
  std::cout << "wrote " << path.string() << "\n";
  std::cout << "domains " << data.domains().size() << "\n";
  for (int d : data.domains()) {
    std::cout << "domain " << d << "\t" << data.rows_of_domain(d).size()
              << " samples\n";
  }
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::optional<std::string> mode;
  std::optional<std::string> resume;
  std::optional<int> iterations;
  std::optional<std::string> output_dir;
  bool allow_mismatch = false;
};

int cmd_train(const TrainArgs& args) {
  dcml::TrainConfig cfg = dcml::load_config(args.config);
  if (args.mode) cfg.mode = dcml::parse_mode(*args.mode);
  if (args.iterations) cfg.iterations = *args.iterations;
  if (args.output_dir) cfg.io.output_dir = *args.output_dir;
  cfg.validate();

  dcml::TrainOptions options;
  options.run_dir = dcml::resolve_output(cfg.io.output_dir);
  options.allow_config_mismatch = args.allow_mismatch;
  if (args.resume) {
    options.resume = fs::path(*args.resume);
    if (!fs::exists(*options.resume)) {
      throw dcml::ConfigError("resume checkpoint not found: " + *args.resume);
    }
  }
  const dcml::DomainDataset data = dcml::load_or_generate(cfg);
  const int every = std::max(1, cfg.iterations / 20);
  options.on_row = [&](const dcml::MetricsRow& row) {
    if (row.iteration % every == 0 || row.iteration == cfg.iterations) {
      std::cout << "iter " << row.iteration << "\ttotal "
                << row.metrics.total << "\talign " << row.metrics.align_loss
                << "\n";
    }
  };
  const dcml::TrainingRun run = dcml::train(cfg, data, options);
  std::cout << "finished at iteration " << run.last_iteration << " in "
            << options.run_dir.string() << "\n";
  return kExitOk;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::string item =
        s.substr(start, comma == std::string::npos ? std::string::npos
                                                   : comma - start);
    if (item.empty()) throw dcml::ConfigError("malformed id list: '" + s + "'");
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw dcml::ConfigError("malformed id list: '" + s + "'");
    }
    if (used != item.size()) {
      throw dcml::ConfigError("malformed id list: '" + s + "'");
    }
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::optional<std::string> heldout;
  std::optional<std::string> ks;
  std::optional<int> tasks;
  std::vector<std::string> compare;
  std::optional<std::string> out;
};

int cmd_eval(const EvalArgs& args) {
  dcml::EvalOptions options;
  options.checkpoints.push_back(args.checkpoint);
  options.labels.push_back("primary");
  for (std::size_t i = 0; i < args.compare.size(); ++i) {
    options.checkpoints.push_back(args.compare[i]);
    options.labels.push_back("compare" + std::to_string(i + 1));
  }
  options.dataset = args.dataset;
  if (args.heldout) options.heldout = parse_int_list(*args.heldout);
  if (args.ks) options.ks = parse_int_list(*args.ks);
  options.tasks = args.tasks;
  options.out_dir = dcml::resolve_output(
      args.out ? fs::path(*args.out) : fs::path(args.checkpoint).parent_path() / "eval");
  const dcml::EvalOutput out = dcml::evaluate_checkpoints(options);
  std::cout << dcml::eval_summary(out);
  std::cout << "reports in " << options.out_dir.string() << "\n";
  return kExitOk;
}

int cmd_gradcheck(const std::string& scale, const std::optional<std::string>& fault) {
  if (fault) dcml::ad::testing::set_gradient_fault(*fault);
  const dcml::GradcheckReport report = dcml::run_gradcheck(
      scale == "small" ? dcml::GradcheckScale::kSmall : dcml::GradcheckScale::kTiny);
  dcml::ad::testing::set_gradient_fault("");
  std::cout << report.table();
  if (report.passed()) return kExitOk;
  std::cerr << "gradcheck failed:\n";
  for (const auto& e : report.entries) {
    if (!e.passed()) std::cerr << "  " << e.name << "\n";
  }
  return kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-conditioned contrastive meta-learning"};
  app.require_subcommand(1);

  std::string gen_config;
  std::optional<std::string> gen_out;
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  gen->add_option("config", gen_config, "Config file")->required();
  gen->add_option("--out", gen_out, "Dataset path (default: config)");

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "Meta-train or train the baseline");
  tr->add_option("config", train_args.config, "Config file")->required();
  tr->add_option("--mode", train_args.mode, "meta | baseline")
      ->check(CLI::IsMember({"meta", "baseline"}));
  tr->add_option("--resume", train_args.resume, "Checkpoint to resume from");
  tr->add_option("--iterations", train_args.iterations, "Override iterations");
  tr->add_option("--output-dir", train_args.output_dir, "Override io.output_dir");
  tr->add_flag("--allow-config-mismatch", train_args.allow_mismatch,
               "Resume even if the checkpoint config hash differs");

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Evaluate checkpoints on held-out domains");
  ev->add_option("checkpoint", eval_args.checkpoint, "Checkpoint")->required();
  ev->add_option("dataset", eval_args.dataset, "Dataset file")->required();
  ev->add_option("--holdout-domains", eval_args.heldout, "Comma-separated ids");
  ev->add_option("--ks", eval_args.ks, "Comma-separated inner step counts");
  ev->add_option("--tasks", eval_args.tasks, "Tasks per held-out domain");
  ev->add_option("--compare", eval_args.compare, "Further checkpoints to tabulate");
  ev->add_option("--out", eval_args.out, "Report directory");

  std::string scale = "tiny";
  std::optional<std::string> fault;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gc->add_option("--scale", scale, "tiny | small")
      ->check(CLI::IsMember({"tiny", "small"}));
  gc->add_option("--inject-fault", fault, "Negate the gradient of one op")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*gen) return cmd_generate(gen_config, gen_out);
    if (*tr) return cmd_train(train_args);
    if (*ev) return cmd_eval(eval_args);
    if (*gc) return cmd_gradcheck(scale, fault);
  } catch (const dcml::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
