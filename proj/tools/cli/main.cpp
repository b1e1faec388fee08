// rbc: dataset generation, training, evaluation, sweeps and the gradient demo.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "rbc/error.hpp"
#include "rbc/harness/commands.hpp"
#include "rbc/harness/config.hpp"

namespace fs = std::filesystem;
using namespace rbc;
using namespace rbc::harness;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kNumericError = 3, kPartialSweep = 4 };

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "INI experiment config (defaults are used when omitted)");
  cmd->add_option("--out", opts.out, "output directory")->required();
  cmd->add_option("--seed", opts.seed, "override the seed (dataset seed for gen-data/sweep, init seed for train)");
}

ExperimentConfig load(const CommonOptions& opts) {
  return opts.config.empty() ? default_config() : load_config(opts.config);
}

// Overrides are appended as comments so the echoed config still reads verbatim.
void note_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  cfg.text += "\n; command-line override: " + key + " = " + value + "\n";
}

fs::path resolve_data(const std::string& flag, const ExperimentConfig& cfg) {
  if (!flag.empty()) return flag;
  if (cfg.data_path) return *cfg.data_path;
  throw ConfigError("no dataset given: pass --data or set [paths] data");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regression-by-classification uncertainty experiments"};
  app.require_subcommand(1);

  CommonOptions gen_opts, train_opts, eval_opts, sweep_opts, grad_opts;
  std::string train_data, eval_data, eval_checkpoint, sweep_data, auc_split, ause_split;
  std::size_t jobs = 0, workers = 0, bins = 0;
  bool no_timestamp = false;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic line dataset");
  add_common(gen, gen_opts);

  auto* tr = app.add_subcommand("train", "train one model");
  add_common(tr, train_opts);
  tr->add_option("--data", train_data, "dataset directory or manifest");
  tr->add_option("--workers", workers, "threads used per batch");

  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on the test splits");
  add_common(ev, eval_opts);
  ev->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
  ev->add_option("--data", eval_data, "dataset directory or manifest");
  ev->add_option("--auc-split", auc_split, "clear, ambiguous or pooled");
  ev->add_option("--ause-split", ause_split, "clear, ambiguous or pooled");

  auto* sw = app.add_subcommand("sweep", "train and evaluate a loss x gamma x seed grid");
  add_common(sw, sweep_opts);
  sw->add_option("--data", sweep_data, "dataset directory (generated into <out>/dataset when omitted)");
  sw->add_option("--jobs", jobs, "cells run concurrently");
  sw->add_flag("--svg-no-timestamp", no_timestamp, "omit the timestamp comment from the SVG chart");

  auto* gd = app.add_subcommand("grad-demo", "tabulate W1 gradients for softmax and softplus heads");
  add_common(gd, grad_opts);
  gd->add_option("--bins", bins, "number of bins K");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*gen) {
      ExperimentConfig cfg = load(gen_opts);
      if (gen_opts.seed) {
        cfg.dataset_seed = *gen_opts.seed;
        note_override(cfg, "dataset.seed", std::to_string(*gen_opts.seed));
      }
      cmd_gen_data(cfg, gen_opts.out, std::cout);
    } else if (*tr) {
      ExperimentConfig cfg = load(train_opts);
      if (train_opts.seed) {
        cfg.train.seed = *train_opts.seed;
        note_override(cfg, "train.seed", std::to_string(*train_opts.seed));
      }
      if (workers) cfg.train.workers = workers;
      cmd_train(cfg, resolve_data(train_data, cfg), train_opts.out, std::cout);
    } else if (*ev) {
      ExperimentConfig cfg = load(eval_opts);
      if (eval_opts.seed) {
        cfg.train.seed = *eval_opts.seed;
        note_override(cfg, "train.seed", std::to_string(*eval_opts.seed));
      }
      if (!auc_split.empty()) {
        cfg.eval.auc_split = parse_eval_split(auc_split);
        note_override(cfg, "eval.auc_split", auc_split);
      }
      if (!ause_split.empty()) {
        cfg.eval.ause_split = parse_eval_split(ause_split);
        note_override(cfg, "eval.ause_split", ause_split);
      }
      cmd_evaluate(cfg, eval_checkpoint, resolve_data(eval_data, cfg), eval_opts.out, std::cout);
    } else if (*sw) {
      ExperimentConfig cfg = load(sweep_opts);
      if (sweep_opts.seed) {
        cfg.dataset_seed = *sweep_opts.seed;
        note_override(cfg, "dataset.seed", std::to_string(*sweep_opts.seed));
      }
      if (jobs) cfg.sweep.jobs = jobs;
      std::optional<fs::path> data;
      if (!sweep_data.empty()) {
        data = fs::path(sweep_data);
      } else if (cfg.data_path) {
        data = cfg.data_path;
      }
      const SweepOutcome outcome = cmd_sweep(cfg, data, sweep_opts.out, !no_timestamp, std::cout);
      if (!outcome.failures.empty()) {
        for (const auto& [cell, msg] : outcome.failures) std::cerr << "cell " << cell << " failed: " << msg << '\n';
        return kPartialSweep;
      }
    } else if (*gd) {
      ExperimentConfig cfg = load(grad_opts);
      cmd_grad_demo(bins ? bins : cfg.model.bins, grad_opts.out, std::cout);
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kOk;
}
