#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string_view>
#include <vector>

#include "rbc/metrics.hpp"
#include "rbc/network.hpp"
#include "rbc/synth.hpp"

namespace rbc::harness {

enum class EvalSplit { Clear, Ambiguous, Pooled };

std::string_view to_string(EvalSplit split);
EvalSplit parse_eval_split(std::string_view name);

struct EvalConfig {
  UncertaintyMeasure measure = UncertaintyMeasure::Entropy;
  double auc_cutoff = 0.25;
  std::size_t sparsification_steps = 100;
  bool crps = true;
  EvalSplit auc_split = EvalSplit::Ambiguous;
  EvalSplit ause_split = EvalSplit::Ambiguous;
  std::size_t min_mode_separation = 5;  // alpha bins between the two lines
  double mode_threshold = 1.5;          // multiple of 1/K
  std::size_t kde_points = 200;
  std::size_t workers = 1;

  void validate() const;
};

struct HeadReport {
  SparsificationResult sparsification;
  double crps = 0.0;  // mean over the AUSE split; 0 when disabled
  std::vector<double> entropy_clear;
  std::vector<double> entropy_ambiguous;
};

struct EvalReport {
  double auc = 0.0;  // on the configured split
  double auc_clear = 0.0;
  double auc_ambiguous = 0.0;
  HeadReport alpha;
  HeadReport rho;
  // Ambiguous samples whose lines are at least min_mode_separation alpha bins
  // apart, and how many of their alpha histograms show two or more modes.
  std::size_t separated_samples = 0;
  std::size_t multimodal_predictions = 0;

  double multimodal_rate() const;
};

struct SplitPredictions {
  std::vector<Prediction> clear;
  std::vector<Prediction> ambiguous;
};

using Predictor = std::function<Prediction(const SynthSample&)>;

SplitPredictions predict_splits(const NetworkModel& model, const Dataset& data, std::size_t workers = 1);
SplitPredictions predict_splits(const Predictor& predictor, const Dataset& data);

EvalReport evaluate(const Dataset& data, const SplitPredictions& preds, const EvalConfig& cfg);

/// Ground-truth mixture of every line in the sample.
Predictor mixture_predictor(GridPtr alpha_grid, GridPtr rho_grid);

/// One-hot on the labelled bin blended with a uniform share that grows with
/// the bin's own quantization error, so uncertainty ranks error exactly.
Predictor calibrated_predictor(GridPtr alpha_grid, GridPtr rho_grid);

Predictor uniform_predictor(GridPtr alpha_grid, GridPtr rho_grid);

/// Sparsification curves per head and entropy KDE curves per head, as CSVs
/// in `dir`.
void write_eval_curves(const std::filesystem::path& dir, const EvalReport& report, std::size_t bins,
                       std::size_t kde_points);

}  // namespace rbc::harness
