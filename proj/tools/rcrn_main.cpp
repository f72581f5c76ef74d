// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry point. Subcommands: train, eval, gradcheck, bench, gen.
// Exit codes: 0 success, 1 usage or config error, 2 data or format error,
// 3 numerical failure.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rcrn/bench.hpp"
#include "rcrn/checkpoint.hpp"
#include "rcrn/config.hpp"
#include "rcrn/data.hpp"
#include "rcrn/errors.hpp"
#include "rcrn/gradcheck.hpp"
#include "rcrn/train.hpp"

namespace {

using namespace rcrn;

RunConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!path.empty()) cfg = RunConfig::parse_file(path);
  for (const std::string& kv : overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

EncoderConfig encoder_config(const RunConfig& cfg) {
  EncoderConfig enc;
  enc.kind = parse_encoder_kind(cfg.get_or("encoder_kind", "rcrn"));
  enc.atom = parse_atom_kind(cfg.get_or("atom", "lstm"));
  enc.hidden_dim = static_cast<std::size_t>(cfg.get_int_or("hidden_dim", 200));
  enc.input_dim = static_cast<std::size_t>(cfg.get_int_or("embed_dim", 300));
  enc.layers = static_cast<std::size_t>(cfg.get_int_or("layers", 3));
  enc.output_gate =
      parse_output_gate_mode(cfg.get_or("output_gate_mode", "gated_c4"));
  enc.seed = static_cast<std::uint64_t>(cfg.get_int_or("seed", 1));
  return enc;
}

ScanExec exec_from(const RunConfig& cfg) {
  ScanExec exec;
  exec.impl = ScanImpl::optimized;
  long long w = cfg.get_int_or("workers", 1);
  if (w < 1) throw ConfigError("key workers: must be >= 1, got " +
                               std::to_string(w));
  exec.workers = static_cast<unsigned>(w);
  return exec;
}

int cmd_train(const RunConfig& cfg) {
  Vocab vocab;
  LabelMap labels;
  Dataset train = load_tsv(cfg.get("train_path"), vocab, labels, true);
  Dataset dev = load_tsv(cfg.get("dev_path"), vocab, labels, false);

  EncoderConfig enc = encoder_config(cfg);
  Model<double> model = [&] {
    if (cfg.has("embed_path")) {
      EmbeddingTable<double> table =
          load_word_vectors<double>(cfg.get("embed_path"), vocab, enc.seed);
      if (cfg.has("embed_dim") &&
          table.dim() != static_cast<std::size_t>(cfg.get_int("embed_dim")))
        throw ConfigError("embed_dim " + cfg.get("embed_dim") +
                          " does not match vector file width " +
                          std::to_string(table.dim()));
      enc.input_dim = table.dim();
      return init_model<double>(
          enc, std::move(table), labels.size(),
          static_cast<std::size_t>(cfg.get_int_or("head_hidden", 200)));
    }
    return init_model<double>(
        enc, vocab.size(), labels.size(),
        static_cast<std::size_t>(cfg.get_int_or("head_hidden", 200)));
  }();

  TrainOptions<double> opt;
  opt.lr = cfg.get_num_or("lr", 0.001);
  opt.batch_size = static_cast<std::size_t>(cfg.get_int_or("batch_size", 32));
  opt.epochs = static_cast<std::size_t>(cfg.get_int_or("epochs", 10));
  opt.seed = enc.seed;
  opt.exec = exec_from(cfg);
  opt.checkpoint_path = cfg.get_or("checkpoint_path", "model.rcrn");
  opt.metrics_path = cfg.get_or("metrics_path", "metrics.csv");
  opt.vocab = &vocab;
  opt.labels = &labels;
  opt.progress = &std::cout;

  std::vector<EpochMetrics> log = train_loop(model, train, dev, opt);
  double final_acc = log.empty() ? 0.0 : log.back().dev_acc;
  std::cout << "final dev accuracy " << std::fixed << std::setprecision(4)
            << final_acc << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_path,
             const RunConfig& cfg) {
  LoadedCheckpoint<double> lc = load_checkpoint<double>(checkpoint);
  Dataset ds = load_tsv(data_path, lc.vocab, lc.labels, false);
  double acc = evaluate(lc.model, ds, exec_from(cfg));
  std::cout << "accuracy " << std::fixed << std::setprecision(4) << acc
            << "\n";
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg, bool inject) {
  GradCheckOptions opt;
  opt.inject = inject ? 0.1 : 0.0;
  std::vector<GradCheckCase> cases = run_gradcheck(opt);
  EncoderConfig enc = encoder_config(cfg);
  cases.push_back(gradcheck_model(enc, opt));
  bool ok = true;
  for (const GradCheckCase& c : cases) {
    std::cout << c.name << " max_rel_err " << std::scientific
              << std::setprecision(3) << c.max_rel_err
              << (c.pass ? " [ok]" : " [FAIL]") << "\n";
    ok = ok && c.pass;
  }
  if (!ok) throw NumericError("gradient check failed");
  std::cout << "all groups within tolerance " << std::scientific
            << std::setprecision(0) << opt.tol << "\n";
  return 0;
}

int cmd_bench(const RunConfig& cfg) {
  BenchOptions opt;
  opt.workers = static_cast<unsigned>(cfg.get_int_or("workers", 4));
  opt.seed = static_cast<std::uint64_t>(cfg.get_int_or("seed", 1));
  std::vector<BenchRow> rows = run_bench(opt, &std::cerr);
  if (cfg.has("bench_path")) {
    std::ofstream out(cfg.get("bench_path"), std::ios::trunc);
    if (!out)
      throw DataError("cannot write bench file: " + cfg.get("bench_path"));
    write_bench_csv(rows, out);
    std::cout << "wrote " << rows.size() << " rows to "
              << cfg.get("bench_path") << "\n";
  } else {
    write_bench_csv(rows, std::cout);
  }
  return 0;
}

struct GenArgs {
  std::string task = "first_token";
  std::string train_path;
  std::string test_path;
  long long n_train = 2000;
  long long n_test = 500;
  long long seq_len = 32;
  long long vocab = 8;
  long long seed = 1;
};

int cmd_gen(const GenArgs& a) {
  SynthTask task;
  if (a.task == "first_token") {
    task = gen_first_token_task(static_cast<std::size_t>(a.n_train),
                                static_cast<std::size_t>(a.n_test),
                                static_cast<std::size_t>(a.seq_len),
                                static_cast<std::size_t>(a.vocab),
                                static_cast<std::uint64_t>(a.seed));
  } else if (a.task == "random_label") {
    task = gen_random_label_task(static_cast<std::size_t>(a.n_train),
                                 static_cast<std::size_t>(a.seq_len),
                                 static_cast<std::size_t>(a.vocab),
                                 static_cast<std::uint64_t>(a.seed));
  } else {
    throw ConfigError("gen: unknown task '" + a.task +
                      "' (expected first_token or random_label)");
  }
  serialize_tsv(task.train, task.vocab, task.labels, a.train_path);
  serialize_tsv(task.test, task.vocab, task.labels, a.test_path);
  std::cout << "wrote " << task.train.size() << " train and "
            << task.test.size() << " test examples\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrently controlled recurrent network toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config_opts = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path,
                    "Path to a key=value config file");
    sub->add_option("--set", overrides,
                    "Override one config key, as key=value (repeatable)");
  };

  CLI::App* train = app.add_subcommand("train", "Train a model");
  add_config_opts(train);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_checkpoint, eval_data;
  eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")
      ->required();
  eval->add_option("--data", eval_data, "TSV dataset to score")->required();
  add_config_opts(eval);

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference gradient check");
  bool inject = false;
  gradcheck->add_flag("--inject-bug", inject,
                      "Corrupt one gradient to prove the check can fail");
  add_config_opts(gradcheck);

  CLI::App* bench = app.add_subcommand("bench", "Encoder runtime benchmark");
  add_config_opts(bench);

  CLI::App* gen = app.add_subcommand("gen", "Write a synthetic TSV task");
  GenArgs ga;
  gen->add_option("--task", ga.task, "first_token or random_label");
  gen->add_option("--train", ga.train_path, "Output train TSV")->required();
  gen->add_option("--test", ga.test_path, "Output test TSV")->required();
  gen->add_option("--n-train", ga.n_train, "Training examples");
  gen->add_option("--n-test", ga.n_test, "Test examples (first_token only)");
  gen->add_option("--seq-len", ga.seq_len, "Tokens per example");
  gen->add_option("--vocab", ga.vocab, "Vocabulary size including pad/unk");
  gen->add_option("--seed", ga.seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = load_config(config_path, overrides);
    if (app.got_subcommand(train)) return cmd_train(cfg);
    if (app.got_subcommand(eval)) return cmd_eval(eval_checkpoint, eval_data, cfg);
    if (app.got_subcommand(gradcheck)) return cmd_gradcheck(cfg, inject);
    if (app.got_subcommand(bench)) return cmd_bench(cfg);
    if (app.got_subcommand(gen)) return cmd_gen(ga);
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
