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
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "dcml/persistence.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(DCML_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = ::pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dcml_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const std::string& extra) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << "iterations: 2\n"
                        "generator:\n  num_domains: 3\n  num_concepts: 4\n  samples_per_domain: 40\n"
                        "model:\n  image_hidden: [8]\n  text_hidden: [8]\n  embed_dim: 4\n  domain_embed_dim: 2\n"
                        "meta:\n  meta_batch_size: 2\n  inner_steps: 1\n  support_size: 6\n  query_size: 6\n"
                        "data:\n  heldout_domains: [2]\n"
                        "eval:\n  ks: [0, 1]\n  tasks: 2\n"
                     << "io:\n  output_dir: " << (dir_ / "run").string() << "\n  checkpoint_every: 1\n"
                     << extra;
    return p;
  }

  fs::path dir_;
};

TEST_F(Cli, GenerateIsDeterministicAndSummarizes) {
  const fs::path cfg = write_config("c.yaml", "");
  const Result a = run("generate " + cfg.string() + " --out " + (dir_ / "a.bin").string());
  const Result b = run("generate " + cfg.string() + " --out " + (dir_ / "b.bin").string());
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_EQ(dcml::read_file_bytes(dir_ / "a.bin"), dcml::read_file_bytes(dir_ / "b.bin"));
  EXPECT_NE(a.out.find("domains 3"), std::string::npos) << a.out;
  EXPECT_NE(a.out.find("domain 2\t40 samples"), std::string::npos) << a.out;
}

TEST_F(Cli, TrainSmokeAndBaseline) {
  const fs::path cfg = write_config("c.yaml", "");
  const Result r = run("train " + cfg.string());
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream metrics(dir_ / "run" / "metrics.tsv");
  std::string line;
  int rows = -1;
  while (std::getline(metrics, line)) ++rows;
  EXPECT_EQ(rows, 2);
  const Result b = run("train " + cfg.string() + " --mode baseline --output-dir " +
                       (dir_ / "base").string());
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_TRUE(fs::exists(dir_ / "base" / "final.ckpt"));
}

TEST_F(Cli, ResumeMismatchIsValidationError) {
  const fs::path cfg = write_config("c.yaml", "");
  ASSERT_EQ(run("train " + cfg.string()).code, 0);
  const fs::path ckpt = dir_ / "run" / "checkpoints" / "ckpt_000001.bin";
  ASSERT_TRUE(fs::exists(ckpt));
  EXPECT_EQ(run("train " + cfg.string() + " --resume " + ckpt.string()).code, 0);
  const fs::path other = write_config("o.yaml", "losses:\n  temperature: 0.5\n");
  EXPECT_EQ(run("train " + other.string() + " --resume " + ckpt.string()).code, 1);
  EXPECT_EQ(run("train " + other.string() + " --resume " + ckpt.string() +
                " --allow-config-mismatch").code, 0);
}

TEST_F(Cli, InvalidInputsWriteNothing) {
  const fs::path typo = write_config("t.yaml", "losses:\n  temprature: 0.5\n");
  const Result r = run("train " + typo.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("temprature"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(dir_ / "run"));
  const fs::path bad = write_config("b.yaml", "losses:\n  temperature: -1\n");
  EXPECT_EQ(run("generate " + bad.string()).code, 1);
  EXPECT_EQ(run("train " + bad.string()).code, 1);
  EXPECT_FALSE(fs::exists(dir_ / "run"));
  EXPECT_EQ(run("train " + (dir_ / "missing.yaml").string()).code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("train " + write_config("c.yaml", "").string() + " --resume " +
                (dir_ / "nope.ckpt").string()).code, 1);
  EXPECT_FALSE(fs::exists(dir_ / "run"));
}

TEST_F(Cli, EvalWritesReportsAndRejectsUnknownDomain) {
  const fs::path cfg = write_config("c.yaml", "");
  ASSERT_EQ(run("generate " + cfg.string() + " --out " + (dir_ / "d.bin").string()).code, 0);
  ASSERT_EQ(run("train " + cfg.string()).code, 0);
  const std::string ckpt = (dir_ / "run" / "final.ckpt").string();
  const std::string data = (dir_ / "d.bin").string();
  const Result ok = run("eval " + ckpt + " " + data + " --ks 0,1 --out " + (dir_ / "ev").string() +
                        " --compare " + ckpt);
  ASSERT_EQ(ok.code, 0) << ok.out;
  EXPECT_TRUE(fs::exists(dir_ / "ev" / "eval_report.tsv"));
  EXPECT_TRUE(fs::exists(dir_ / "ev" / "eval_summary.txt"));
  EXPECT_NE(ok.out.find("compare1"), std::string::npos);
  const Result bad = run("eval " + ckpt + " " + data + " --holdout-domains 9 --out " +
                         (dir_ / "ev_bad").string());
  EXPECT_EQ(bad.code, 1);
  EXPECT_FALSE(fs::exists(dir_ / "ev_bad"));
  EXPECT_EQ(run("eval " + ckpt + " " + data + " --ks 1,x --out " + (dir_ / "ev_bad").string()).code, 1);
  EXPECT_FALSE(fs::exists(dir_ / "ev_bad"));
}

TEST_F(Cli, OutputRootEnvironment) {
  std::ofstream(dir_ / "rel.yaml") << "iterations: 1\n"
                                      "generator:\n  num_domains: 3\n  samples_per_domain: 40\n"
                                      "model:\n  image_hidden: [4]\n  text_hidden: [4]\n  embed_dim: 4\n"
                                      "meta:\n  meta_batch_size: 1\n  support_size: 4\n  query_size: 4\n"
                                      "data:\n  heldout_domains: [2]\n"
                                      "io:\n  output_dir: relrun\n";
  const Result r = run("train " + (dir_ / "rel.yaml").string() + " DCML_IGNORED=1");
  EXPECT_NE(r.code, 0);  // stray positional argument
  const std::string cmd = "DCML_OUTPUT_ROOT=" + dir_.string() + " " + std::string(DCML_CLI_PATH) +
                          " train " + (dir_ / "rel.yaml").string() + " > /dev/null 2>&1";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(dir_ / "relrun" / "metrics.tsv"));
}

TEST_F(Cli, GradcheckPassesAndDetectsInjectedFault) {
  const auto start = std::chrono::steady_clock::now();
  const Result ok = run("gradcheck --scale tiny");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_LT(secs, 60.0);
  EXPECT_NE(ok.out.find("< 1e-04"), std::string::npos);
  EXPECT_NE(ok.out.find("< 1e-03"), std::string::npos);
  for (const char* op : {"tanh", "matmul", "gather_rows", "log_softmax_rows"}) {
    const Result bad = run(std::string("gradcheck --inject-fault ") + op);
    EXPECT_EQ(bad.code, 2) << op;
    EXPECT_NE(bad.out.find("gradcheck failed"), std::string::npos) << op;
    EXPECT_NE(bad.out.find(std::string("primitive/") + op), std::string::npos) << bad.out;
  }
}

}  // namespace
