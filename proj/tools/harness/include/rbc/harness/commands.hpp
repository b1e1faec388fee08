#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rbc/harness/config.hpp"
#include "rbc/harness/evaluation.hpp"
#include "rbc/harness/results.hpp"
#include "rbc/trainer.hpp"

namespace rbc::harness {

namespace fs = std::filesystem;

/// Generates the dataset into out_dir and echoes the config there.
DatasetManifest cmd_gen_data(const ExperimentConfig& cfg, const fs::path& out_dir, std::ostream& log);

/// Trains one model; writes checkpoint.rbck, history.csv and config.ini.
TrainResult cmd_train(const ExperimentConfig& cfg, const fs::path& data_dir, const fs::path& out_dir,
                      std::ostream& log);

struct EvaluateOutput {
  ResultRow row;
  EvalReport report;
};

/// Evaluates a checkpoint on the test splits; writes results.csv,
/// summary.csv, sparsification and entropy KDE curves. Never modifies the
/// checkpoint or the dataset.
EvaluateOutput cmd_evaluate(const ExperimentConfig& cfg, const fs::path& checkpoint, const fs::path& data_dir,
                            const fs::path& out_dir, std::ostream& log);

/// Train-and-evaluate for one (loss, gamma, target mode, seed) cell.
struct SweepCell {
  LossKind loss;
  double gamma;
  TargetMode target_mode;
  std::uint64_t seed;

  std::string name() const;
};

std::vector<SweepCell> sweep_cells(const SweepConfig& sweep);

struct SweepOutcome {
  std::vector<ResultRow> rows;  // completed cells in grid order
  std::vector<AggregateRow> aggregate;
  std::vector<std::pair<std::string, std::string>> failures;  // cell name, message
};

/// Runs every cell, each in its own directory under out_dir/cells. A failed
/// cell is recorded and the sweep continues. The dataset comes from data_dir
/// when given, otherwise it is generated into out_dir/dataset.
SweepOutcome cmd_sweep(const ExperimentConfig& cfg, const std::optional<fs::path>& data_dir, const fs::path& out_dir,
                       bool svg_timestamp, std::ostream& log);

struct GradDemoRow {
  std::string scenario;  // case1 or case2
  HeadKind head;
  double logit;          // the swept logit t
  bool calibrated;       // t chosen so the softmax mass hits 1e-6 (case1) or 1 - 1e-6 (case2)
  double target_mass;    // predicted mass on the correct bin
  double wrong_mass;     // mass on the wrong mode (case2) or the largest other bin (case1)
  double target_grad;    // |d W1 / d z_target|
  double grad_norm;
};

/// Case 1: correct-bin logit 0, every other logit t.
/// Case 2: one wrong bin at logit t, every other logit 0.
/// Both heads see identical logits.
std::vector<GradDemoRow> grad_demo(std::size_t bins, const std::vector<double>& sweep);

double case1_calibrated_logit(std::size_t bins);
double case2_calibrated_logit(std::size_t bins);

void cmd_grad_demo(std::size_t bins, const fs::path& out_dir, std::ostream& log);

/// Creates out_dir (and parents); ConfigError naming the path on failure.
void ensure_directory(const fs::path& dir);

}  // namespace rbc::harness
