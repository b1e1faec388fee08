#include "rbc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "rbc/error.hpp"
#include "rbc/format.hpp"
#include "rbc/metrics.hpp"

namespace rbc {

std::string_view to_string(TargetMode mode) {
  return mode == TargetMode::Unimodal ? "unimodal" : "multimodal";
}

TargetMode parse_target_mode(std::string_view name) {
  if (name == "unimodal") return TargetMode::Unimodal;
  if (name == "multimodal") return TargetMode::Multimodal;
  throw ConfigError("unknown target mode '" + std::string(name) + "' (expected unimodal or multimodal)");
}

void TrainConfig::validate() const {
  if (!(adam.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (!(target_sigma >= 0.0)) throw ConfigError("target sigma must be >= 0");
  if (!(auc_cutoff > 0.0)) throw ConfigError("AUC cutoff must be positive");
  loss.hinge.validate();
}

Adam::Adam(std::size_t n_params, AdamConfig cfg) : cfg_(cfg), m_(n_params, 0.0), v_(n_params, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    params[i] -= cfg_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.epsilon);
  }
}

std::pair<BinGrid, BinGrid> make_grids(const Dataset& data, std::size_t bins) {
  if (data.train.empty()) throw ConfigError("cannot build grids from an empty training split");
  double a_lo = std::numeric_limits<double>::infinity(), a_hi = -a_lo;
  double r_lo = a_lo, r_hi = a_hi;
  for (const auto& s : data.train) {
    for (const auto& l : s.lines) {
      a_lo = std::min(a_lo, l.alpha);
      a_hi = std::max(a_hi, l.alpha);
      r_lo = std::min(r_lo, l.rho);
      r_hi = std::max(r_hi, l.rho);
    }
  }
  if (!(a_lo < a_hi) || !(r_lo < r_hi)) throw ConfigError("training lines do not span a range");
  return {make_linear_grid(a_lo, a_hi, bins), make_linear_grid(r_lo, r_hi, bins)};
}

DiracMixture target_mixture(const SynthSample& sample, TargetMode mode, bool alpha) {
  auto value = [alpha](const LineParams& l) { return alpha ? l.alpha : l.rho; };
  if (mode == TargetMode::Unimodal) return DiracMixture::dirac(value(sample.label()));
  std::vector<double> values;
  for (const auto& l : sample.lines) values.push_back(value(l));
  return DiracMixture::equal(values);
}

Targets build_targets(const SynthSample& sample, TargetMode mode, const GridPtr& alpha_grid, const GridPtr& rho_grid,
                      double sigma_bins) {
  return {gaussian_smooth(encode_mixture(alpha_grid, target_mixture(sample, mode, true)), sigma_bins),
          gaussian_smooth(encode_mixture(rho_grid, target_mixture(sample, mode, false)), sigma_bins)};
}

LineParams decode_line(const Prediction& p) {
  return {decode_argmax(p.alpha), decode_argmax(p.rho)};
}

std::vector<double> horizon_errors(std::span<const Prediction> preds, std::span<const SynthSample> samples,
                                   std::size_t width, std::size_t height) {
  if (preds.size() != samples.size()) throw std::invalid_argument("prediction and sample counts differ");
  std::vector<double> errors(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    errors[i] = horizon_error(decode_line(preds[i]), samples[i].label(), static_cast<double>(width),
                              static_cast<double>(height));
  }
  return errors;
}

double evaluate_auc(const NetworkModel& model, std::span<const SynthSample> samples, double cutoff,
                    std::size_t workers) {
  std::vector<const Image*> images;
  for (const auto& s : samples) images.push_back(&s.image);
  const auto preds = predict_batch(model, std::span<const Image* const>(images), workers);
  const auto errors = horizon_errors(preds, samples, model.spec().width, model.spec().height);
  return auc_cumulative_error(errors, cutoff);
}

TrainResult train(const Dataset& data, const NetworkSpec& spec, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  spec.validate();
  if (spec.height != data.config.height || spec.width != data.config.width) {
    throw ConfigError("network input size does not match the dataset's images");
  }
  if (data.test_clear.empty()) throw ConfigError("training needs a non-empty clear test split");

  auto [ag, rg] = make_grids(data, spec.bins);
  NetworkModel model(spec, share(std::move(ag)), share(std::move(rg)));
  Rng master(cfg.seed);
  model.initialize(master());
  Rng shuffle_rng(master());

  std::vector<Targets> targets;
  targets.reserve(data.train.size());
  for (const auto& s : data.train) {
    targets.push_back(build_targets(s, cfg.target_mode, model.alpha_grid(), model.rho_grid(), cfg.target_sigma));
  }

  Adam adam(model.params().size(), cfg.adam);
  TrainResult result{model, {}, 0};
  double best_auc = -1.0;
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      std::vector<Example> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t j = order[i];
        batch.push_back({&data.train[j].image, &targets[j].alpha, &targets[j].rho});
      }
      try {
        const BackwardResult br = backward(model, batch, cfg.loss, cfg.workers);
        adam.step(model.params(), br.grad);
        for (double p : model.params()) {
          if (!std::isfinite(p)) throw NumericError("non-finite parameter after update");
        }
        loss_sum += br.loss * static_cast<double>(end - begin);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
    }
    const EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()),
                          evaluate_auc(model, data.test_clear, cfg.auc_cutoff, cfg.workers)};
    result.history.push_back(rec);
    if (rec.clear_auc > best_auc) {
      best_auc = rec.clear_auc;
      result.best_epoch = epoch;
      std::copy(model.params().begin(), model.params().end(), result.model.params().begin());
    }
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history) {
  out << "epoch,train_loss,clear_auc\n";
  for (const auto& r : history) out << r.epoch << ',' << fmt6(r.train_loss) << ',' << fmt6(r.clear_auc) << '\n';
}

}  // namespace rbc
