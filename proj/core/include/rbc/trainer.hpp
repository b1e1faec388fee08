#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "rbc/bins.hpp"
#include "rbc/network.hpp"
#include "rbc/synth.hpp"

namespace rbc {

enum class TargetMode {
  Unimodal,    // the labelled line only
  Multimodal,  // equal-weight mixture of every line in the image
};

std::string_view to_string(TargetMode mode);
TargetMode parse_target_mode(std::string_view name);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  LossConfig loss;
  double target_sigma = 1.0;  // Gaussian smoothing of targets, in bins; 0 disables
  TargetMode target_mode = TargetMode::Unimodal;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  AdamConfig adam;
  std::uint64_t seed = 0;
  double auc_cutoff = 0.25;
  std::size_t workers = 1;

  void validate() const;
};

class Adam {
 public:
  Adam(std::size_t n_params, AdamConfig cfg);
  void step(std::span<double> params, std::span<const double> grad);
  std::size_t steps() const noexcept { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

struct EpochRecord {
  std::size_t epoch;  // 1-based
  double train_loss;  // mean over the epoch's samples
  double clear_auc;
};

struct TrainResult {
  NetworkModel model;  // parameters of the best clear-AUC epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

/// Linear grids spanning the alpha and rho values of every training line.
std::pair<BinGrid, BinGrid> make_grids(const Dataset& data, std::size_t bins);

DiracMixture target_mixture(const SynthSample& sample, TargetMode mode, bool alpha);

struct Targets {
  Histogram alpha;
  Histogram rho;
};

Targets build_targets(const SynthSample& sample, TargetMode mode, const GridPtr& alpha_grid, const GridPtr& rho_grid,
                      double sigma_bins);

/// Argmax-decoded line for a prediction.
LineParams decode_line(const Prediction& p);

/// Horizon error of each prediction against its sample's labelled line.
std::vector<double> horizon_errors(std::span<const Prediction> preds, std::span<const SynthSample> samples,
                                   std::size_t width, std::size_t height);

double evaluate_auc(const NetworkModel& model, std::span<const SynthSample> samples, double cutoff,
                    std::size_t workers = 1);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Shuffled mini-batch Adam on the training split. Deterministic given the
/// dataset, spec and config. Divergence throws NumericError naming the epoch
/// and batch.
TrainResult train(const Dataset& data, const NetworkSpec& spec, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// CSV `epoch,train_loss,clear_auc`.
void write_history_csv(std::ostream& out, std::span<const EpochRecord> history);

}  // namespace rbc
