#include "rbc/harness/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "rbc/error.hpp"
#include "rbc/format.hpp"
#include "rbc/trainer.hpp"

namespace rbc::harness {

namespace {

struct View {
  std::vector<const SynthSample*> samples;
  std::vector<const Prediction*> preds;
};

View select(const Dataset& data, const SplitPredictions& preds, EvalSplit split) {
  View v;
  auto add = [&](const std::vector<SynthSample>& s, const std::vector<Prediction>& p) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      v.samples.push_back(&s[i]);
      v.preds.push_back(&p[i]);
    }
  };
  if (split != EvalSplit::Ambiguous) add(data.test_clear, preds.clear);
  if (split != EvalSplit::Clear) add(data.test_ambiguous, preds.ambiguous);
  return v;
}

double auc_of(const View& v, const Dataset& data, double cutoff) {
  if (v.samples.empty()) throw ConfigError("cannot compute AUC on an empty split");
  std::vector<double> errors;
  for (std::size_t i = 0; i < v.samples.size(); ++i) {
    errors.push_back(horizon_error(decode_line(*v.preds[i]), v.samples[i]->label(),
                                   static_cast<double>(data.config.width), static_cast<double>(data.config.height)));
  }
  return auc_cumulative_error(errors, cutoff);
}

void head_metrics(const View& v, bool alpha, const EvalConfig& cfg, HeadReport& out) {
  std::vector<EvalRecord> records;
  double crps_sum = 0.0;
  for (std::size_t i = 0; i < v.samples.size(); ++i) {
    const Histogram& h = alpha ? v.preds[i]->alpha : v.preds[i]->rho;
    const LineParams& gt = v.samples[i]->label();
    const double truth = alpha ? gt.alpha : gt.rho;
    records.push_back({std::abs(decode_argmax(h) - truth), uncertainty(cfg.measure, h.probs())});
    if (cfg.crps) crps_sum += crps_mixture(h, target_mixture(*v.samples[i], TargetMode::Multimodal, alpha));
  }
  out.sparsification = sparsification(records, cfg.sparsification_steps, cfg.workers);
  out.crps = cfg.crps ? crps_sum / static_cast<double>(records.size()) : 0.0;
}

std::vector<double> entropies(const std::vector<Prediction>& preds, bool alpha) {
  std::vector<double> out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(entropy(alpha ? p.alpha : p.rho));
  return out;
}

void check_counts(const Dataset& data, const SplitPredictions& preds) {
  if (preds.clear.size() != data.test_clear.size() || preds.ambiguous.size() != data.test_ambiguous.size()) {
    throw ConfigError("prediction counts do not match the test splits");
  }
  if (data.test_clear.empty()) throw ConfigError("dataset has no clear test split");
  if (data.test_ambiguous.empty()) throw ConfigError("dataset has no ambiguous test split");
}

void write_kde(const std::filesystem::path& path, const HeadReport& head, std::size_t bins, std::size_t points) {
  std::vector<double> xs(points);
  const double top = std::log(static_cast<double>(bins));
  for (std::size_t i = 0; i < points; ++i) xs[i] = top * static_cast<double>(i) / static_cast<double>(points - 1);
  const auto clear = kde(head.entropy_clear, silverman_bandwidth(head.entropy_clear), xs);
  const auto ambiguous = kde(head.entropy_ambiguous, silverman_bandwidth(head.entropy_ambiguous), xs);
  std::ofstream out(path);
  out << "entropy,clear_density,ambiguous_density\n";
  for (std::size_t i = 0; i < points; ++i) out << fmt6(xs[i]) << ',' << fmt6(clear[i]) << ',' << fmt6(ambiguous[i]) << '\n';
  if (!out) throw ConfigError("cannot write " + path.string());
}

Histogram blended_one_hot(const GridPtr& grid, double value) {
  const std::size_t k = grid->bin_of(value);
  const double err = std::abs(grid->center(k) - value);
  const double width = grid->upper(0) - grid->lower(0);
  const double lambda = 0.5 * err / (err + width);
  const double share = lambda / static_cast<double>(grid->size());
  std::vector<double> probs(grid->size(), share);
  probs[k] += 1.0 - lambda;
  return Histogram(grid, std::move(probs));
}

}  // namespace

std::string_view to_string(EvalSplit split) {
  switch (split) {
    case EvalSplit::Clear: return "clear";
    case EvalSplit::Ambiguous: return "ambiguous";
    case EvalSplit::Pooled: return "pooled";
  }
  return "?";
}

EvalSplit parse_eval_split(std::string_view name) {
  if (name == "clear") return EvalSplit::Clear;
  if (name == "ambiguous") return EvalSplit::Ambiguous;
  if (name == "pooled") return EvalSplit::Pooled;
  throw ConfigError("unknown evaluation split '" + std::string(name) + "' (expected clear, ambiguous or pooled)");
}

void EvalConfig::validate() const {
  if (!(auc_cutoff > 0.0)) throw ConfigError("eval.auc_cutoff must be positive");
  if (sparsification_steps < 1) throw ConfigError("eval.sparsification_steps must be at least 1");
  if (kde_points < 2) throw ConfigError("eval.kde_points must be at least 2");
  if (!(mode_threshold > 0.0)) throw ConfigError("eval.mode_threshold must be positive");
}

double EvalReport::multimodal_rate() const {
  return separated_samples ? static_cast<double>(multimodal_predictions) / static_cast<double>(separated_samples) : 0.0;
}

SplitPredictions predict_splits(const NetworkModel& model, const Dataset& data, std::size_t workers) {
  auto run = [&](const std::vector<SynthSample>& samples) {
    std::vector<const Image*> images;
    for (const auto& s : samples) images.push_back(&s.image);
    return predict_batch(model, std::span<const Image* const>(images), workers);
  };
  return {run(data.test_clear), run(data.test_ambiguous)};
}

SplitPredictions predict_splits(const Predictor& predictor, const Dataset& data) {
  SplitPredictions out;
  for (const auto& s : data.test_clear) out.clear.push_back(predictor(s));
  for (const auto& s : data.test_ambiguous) out.ambiguous.push_back(predictor(s));
  return out;
}

EvalReport evaluate(const Dataset& data, const SplitPredictions& preds, const EvalConfig& cfg) {
  cfg.validate();
  check_counts(data, preds);
  EvalReport report;
  report.auc_clear = auc_of(select(data, preds, EvalSplit::Clear), data, cfg.auc_cutoff);
  report.auc_ambiguous = auc_of(select(data, preds, EvalSplit::Ambiguous), data, cfg.auc_cutoff);
  report.auc = cfg.auc_split == EvalSplit::Clear       ? report.auc_clear
               : cfg.auc_split == EvalSplit::Ambiguous ? report.auc_ambiguous
                                                       : auc_of(select(data, preds, EvalSplit::Pooled), data, cfg.auc_cutoff);

  const View ause_view = select(data, preds, cfg.ause_split);
  head_metrics(ause_view, true, cfg, report.alpha);
  head_metrics(ause_view, false, cfg, report.rho);
  report.alpha.entropy_clear = entropies(preds.clear, true);
  report.alpha.entropy_ambiguous = entropies(preds.ambiguous, true);
  report.rho.entropy_clear = entropies(preds.clear, false);
  report.rho.entropy_ambiguous = entropies(preds.ambiguous, false);

  for (std::size_t i = 0; i < data.test_ambiguous.size(); ++i) {
    const auto& s = data.test_ambiguous[i];
    const Histogram& h = preds.ambiguous[i].alpha;
    if (s.lines.size() < 2) continue;
    const std::size_t b0 = h.grid().bin_of(s.lines[0].alpha);
    const std::size_t b1 = h.grid().bin_of(s.lines[1].alpha);
    if ((b0 > b1 ? b0 - b1 : b1 - b0) < cfg.min_mode_separation) continue;
    ++report.separated_samples;
    const double threshold = cfg.mode_threshold / static_cast<double>(h.size());
    if (count_modes(h.probs(), threshold) >= 2) ++report.multimodal_predictions;
  }
  return report;
}

Predictor mixture_predictor(GridPtr alpha_grid, GridPtr rho_grid) {
  return [ag = std::move(alpha_grid), rg = std::move(rho_grid)](const SynthSample& s) {
    return Prediction{encode_mixture(ag, target_mixture(s, TargetMode::Multimodal, true)),
                      encode_mixture(rg, target_mixture(s, TargetMode::Multimodal, false))};
  };
}

Predictor calibrated_predictor(GridPtr alpha_grid, GridPtr rho_grid) {
  return [ag = std::move(alpha_grid), rg = std::move(rho_grid)](const SynthSample& s) {
    return Prediction{blended_one_hot(ag, s.label().alpha), blended_one_hot(rg, s.label().rho)};
  };
}

Predictor uniform_predictor(GridPtr alpha_grid, GridPtr rho_grid) {
  return [ag = std::move(alpha_grid), rg = std::move(rho_grid)](const SynthSample&) {
    return Prediction{Histogram::uniform(ag), Histogram::uniform(rg)};
  };
}

void write_eval_curves(const std::filesystem::path& dir, const EvalReport& report, std::size_t bins,
                       std::size_t kde_points) {
  for (const auto& [name, head] : {std::pair{"alpha", &report.alpha}, std::pair{"rho", &report.rho}}) {
    {
      const auto path = dir / (std::string(name) + "_sparsification.csv");
      std::ofstream out(path);
      write_sparsification_csv(out, head->sparsification);
      if (!out) throw ConfigError("cannot write " + path.string());
    }
    write_kde(dir / (std::string(name) + "_entropy_kde.csv"), *head, bins, kde_points);
  }
}

}  // namespace rbc::harness
