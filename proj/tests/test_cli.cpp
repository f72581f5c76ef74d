// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the installed binary: exit codes, printed accuracy,
// and the files each subcommand leaves behind.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "doctest.h"

namespace {

struct RunResult {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

RunResult run_cli(const std::string& args) {
  std::string cmd = std::string(RCRN_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::filesystem::path work_dir() {
  auto dir = std::filesystem::temp_directory_path() / "rcrn_cli_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string path_of(const std::string& name) {
  return (work_dir() / name).string();
}

std::string write_file(const std::string& name, const std::string& content) {
  std::string p = path_of(name);
  std::ofstream out(p, std::ios::trunc);
  out << content;
  return p;
}

// Last "<label> <number>" line in the output, or NaN.
double printed_value(const std::string& output, const std::string& label) {
  std::istringstream in(output);
  std::string line;
  double found = std::nan("");
  while (std::getline(in, line))
    if (line.rfind(label, 0) == 0)
      found = std::stod(line.substr(label.size()));
  return found;
}

}  // namespace

TEST_CASE("cli rejects bad invocations with exit code 1") {
  CHECK(run_cli("").code == 1);
  CHECK(run_cli("frobnicate").code == 1);
  CHECK(run_cli("eval --data x.tsv").code == 1);  // --checkpoint is required
  RunResult missing = run_cli("train");
  CHECK(missing.code == 1);
  CHECK(missing.output.find("missing key: train_path") != std::string::npos);
  RunResult unknown = run_cli(
      "train -c " + write_file("bad.cfg", "bogus=1\n"));
  CHECK(unknown.code == 1);
  CHECK(unknown.output.find("unknown key: bogus") != std::string::npos);
  CHECK(run_cli("train -c " + path_of("absent.cfg")).code == 1);
  CHECK(run_cli("train --set epochs").code == 1);
  RunResult help = run_cli("--help");
  CHECK(help.code == 0);
  CHECK(help.output.find("train") != std::string::npos);
}

TEST_CASE("gen, train, and eval agree end to end") {
  std::string train_tsv = path_of("task_train.tsv");
  std::string test_tsv = path_of("task_test.tsv");
  RunResult gen = run_cli("gen --task first_token --train " + train_tsv +
                          " --test " + test_tsv +
                          " --n-train 48 --n-test 16 --seq-len 4 --vocab 6"
                          " --seed 3");
  REQUIRE(gen.code == 0);
  CHECK(gen.output.find("48 train") != std::string::npos);
  REQUIRE(std::filesystem::exists(train_tsv));
  REQUIRE(std::filesystem::exists(test_tsv));

  std::string ckpt = path_of("cli_model.rcrn");
  std::string metrics = path_of("cli_metrics.csv");
  std::string cfg = write_file("train.cfg",
                               "train_path=" + train_tsv + "\n" +
                               "dev_path=" + test_tsv + "\n" +
                               "hidden_dim=4\nembed_dim=4\nhead_hidden=8\n"
                               "epochs=2\nbatch_size=16\nworkers=2\nseed=9\n" +
                               "checkpoint_path=" + ckpt + "\n" +
                               "metrics_path=" + metrics + "\n");
  RunResult tr = run_cli("train -c " + cfg);
  REQUIRE(tr.code == 0);
  INFO(tr.output);
  double final_acc = printed_value(tr.output, "final dev accuracy ");
  REQUIRE(std::isfinite(final_acc));
  REQUIRE(std::filesystem::exists(ckpt));
  REQUIRE(std::filesystem::exists(metrics));

  // The metrics file ends with the epoch whose accuracy was printed.
  std::ifstream mf(metrics);
  std::string line, last;
  REQUIRE(std::getline(mf, line));
  CHECK(line == "epoch,train_loss,dev_acc");
  std::size_t rows = 0;
  while (std::getline(mf, line))
    if (!line.empty()) {
      last = line;
      ++rows;
    }
  CHECK(rows == 2);
  double csv_acc = std::stod(last.substr(last.rfind(',') + 1));
  CHECK(csv_acc == doctest::Approx(final_acc).epsilon(1e-6));

  RunResult ev = run_cli("eval --checkpoint " + ckpt + " --data " + test_tsv);
  REQUIRE(ev.code == 0);
  INFO(ev.output);
  double eval_acc = printed_value(ev.output, "accuracy ");
  CHECK(eval_acc == doctest::Approx(final_acc).epsilon(1e-6));

  // Overrides replace file values; one epoch means one metrics row.
  RunResult tr1 = run_cli("train -c " + cfg + " --set epochs=1 --set seed=10");
  REQUIRE(tr1.code == 0);
  std::ifstream mf1(metrics);
  std::size_t lines = 0;
  while (std::getline(mf1, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 2);  // header plus one epoch
}

TEST_CASE("eval reports data errors with exit code 2") {
  std::string junk = write_file("junk.rcrn", "not a checkpoint");
  RunResult r = run_cli("eval --checkpoint " + junk + " --data " +
                        path_of("task_test.tsv"));
  CHECK(r.code == 2);
  CHECK(r.output.find("error:") != std::string::npos);
  RunResult missing = run_cli("eval --checkpoint " + path_of("absent.rcrn") +
                              " --data " + path_of("task_test.tsv"));
  CHECK(missing.code == 2);
}

TEST_CASE("gradcheck passes clean and fails with an injected bug") {
  RunResult ok = run_cli("gradcheck");
  INFO(ok.output);
  REQUIRE(ok.code == 0);
  CHECK(ok.output.find("all groups within tolerance") != std::string::npos);
  CHECK(ok.output.find("[FAIL]") == std::string::npos);
  CHECK(ok.output.find("scan max_rel_err") != std::string::npos);
  CHECK(ok.output.find("model_rcrn_lstm") != std::string::npos);

  RunResult bad = run_cli("gradcheck --inject-bug");
  INFO(bad.output);
  CHECK(bad.code == 3);
  CHECK(bad.output.find("[FAIL]") != std::string::npos);
}
