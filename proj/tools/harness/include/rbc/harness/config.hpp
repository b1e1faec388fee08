#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rbc/harness/evaluation.hpp"
#include "rbc/network.hpp"
#include "rbc/synth.hpp"
#include "rbc/trainer.hpp"

namespace rbc::harness {

struct SweepConfig {
  std::vector<LossKind> losses = {LossKind::HingeW1};
  std::vector<double> gammas;  // absolute values; "x/K" is resolved at parse time
  std::vector<TargetMode> target_modes = {TargetMode::Unimodal};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::size_t jobs = 1;

  void validate() const;
};

/// INI-style experiment description:
///
///   [dataset]  generator settings and `seed`
///   [model]    conv = 8,16,32  kernel  stride  leaky_slope  pooling  bins  head
///   [train]    loss  gamma  hinge_fallback  target_sigma  target_mode  epochs
///              batch_size  learning_rate  beta1  beta2  epsilon  seed  workers
///   [eval]     measure  auc_cutoff  sparsification_steps  crps  auc_split
///              ause_split  min_mode_separation  mode_threshold  kde_points
///   [sweep]    losses  gammas  target_modes  seeds  jobs
///   [paths]    data
///
/// Gammas may be written as a multiple of 1/K, e.g. `1/K` or `0.5/K`.
/// Unknown sections or keys are errors.
struct ExperimentConfig {
  SynthConfig dataset;
  std::uint64_t dataset_seed = 1;
  NetworkSpec model;
  TrainConfig train;
  EvalConfig eval;
  SweepConfig sweep;
  std::optional<std::filesystem::path> data_path;
  std::string text;  // the source text, echoed into output directories

  void validate() const;
};

ExperimentConfig default_config();

/// Throws ConfigError with the offending section.key.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text for a config; parse_config(render_config(c)) reproduces c.
std::string render_config(const ExperimentConfig& cfg);

/// Parses "0.015", "1/K" or "1.5/K".
double parse_gamma(const std::string& text, std::size_t bins);

}  // namespace rbc::harness
