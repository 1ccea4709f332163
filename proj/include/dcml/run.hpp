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

#ifndef DCML_RUN_HPP_
#define DCML_RUN_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dcml/config.hpp"
#include "dcml/evaluation.hpp"
#include "dcml/meta_engine.hpp"
#include "dcml/persistence.hpp"

namespace dcml {

// Environment variable naming the root that relative output paths resolve
// against.
inline constexpr const char* kOutputRootEnv = "DCML_OUTPUT_ROOT";

std::filesystem::path resolve_output(const std::filesystem::path& p);

struct MetricsRow {
  int iteration = 0;
  StepMetrics metrics;
};

// Tab-separated metrics: header + one row per iteration. Floats use the
// shortest round-trip representation, so equal values give equal bytes.
std::string metrics_header(int num_task_columns);
std::string metrics_line(const MetricsRow& row);

struct TrainOptions {
  std::filesystem::path run_dir;  // empty: no files are written
  std::optional<std::filesystem::path> resume;
  bool allow_config_mismatch = false;
  std::function<void(const MetricsRow&)> on_row;
};

struct TrainingRun {
  ParamSet params;
  std::vector<MetricsRow> history;  // rows produced by this invocation
  int last_iteration = 0;
};

// Tasks for one iteration; a pure function of (cfg.seed, iteration).
std::vector<Task> sample_iteration_tasks(const TrainConfig& cfg,
                                         const DomainDataset& data,
                                         int iteration);

// Full training loop (meta or baseline per cfg.mode) on `data` minus the
// held-out domains.
TrainingRun train(const TrainConfig& cfg, const DomainDataset& data,
                  const TrainOptions& options = {});

// Dataset named in the config, or generated from cfg.generator.
DomainDataset load_or_generate(const TrainConfig& cfg);

struct EvalRow {
  std::string run;
  int domain = 0;
  AdaptationPoint point;
};

struct EvalOutput {
  std::vector<EvalRow> rows;
  std::vector<std::pair<std::string, double>> domain_gaps;
};

struct EvalOptions {
  std::vector<std::filesystem::path> checkpoints;  // first is the primary run
  std::vector<std::string> labels;
  std::filesystem::path dataset;
  std::optional<std::vector<int>> heldout;  // default: checkpoint config
  std::optional<std::vector<int>> ks;       // default: checkpoint config
  std::optional<int> tasks;
  std::optional<std::uint64_t> seed;        // default: checkpoint config
  std::filesystem::path out_dir;  // empty: nothing written
};

EvalOutput evaluate_checkpoints(const EvalOptions& options);

std::string eval_table(const EvalOutput& out);
std::string eval_summary(const EvalOutput& out);

}  // namespace dcml

#endif  // DCML_RUN_HPP_
