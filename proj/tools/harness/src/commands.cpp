#include "rbc/harness/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "rbc/checkpoint.hpp"
#include "rbc/error.hpp"
#include "rbc/format.hpp"
#include "rbc/harness/svg.hpp"

namespace rbc::harness {

namespace {

constexpr const char* kCheckpointName = "checkpoint.rbck";

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw ConfigError("cannot write " + path.string());
}

template <class Fn>
void write_with(const fs::path& path, Fn&& fn) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  fn(out);
  if (!out) throw ConfigError("cannot write " + path.string());
}

Dataset load_data(const fs::path& data_dir) {
  if (!fs::exists(data_dir)) throw ConfigError("dataset path does not exist: " + data_dir.string());
  return load_dataset(data_dir);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ResultRow make_row(const TrainConfig& t, const EvalReport& r) {
  ResultRow row;
  row.loss = t.loss.kind;
  row.gamma = t.loss.kind == LossKind::HingeW1 ? t.loss.hinge.gamma : 0.0;
  row.target_mode = t.target_mode;
  row.seed = t.seed;
  row.metrics = {r.auc, r.alpha.sparsification.ause, r.rho.sparsification.ause, r.alpha.crps, r.rho.crps};
  return row;
}

void write_summary(const fs::path& path, const EvalReport& r) {
  write_with(path, [&](std::ostream& out) {
    out << "metric,value\n";
    auto kv = [&](const char* k, double v) { out << k << ',' << fmt6(v) << '\n'; };
    kv("auc", r.auc);
    kv("auc_clear", r.auc_clear);
    kv("auc_ambiguous", r.auc_ambiguous);
    kv("alpha_ause", r.alpha.sparsification.ause);
    kv("rho_ause", r.rho.sparsification.ause);
    kv("alpha_crps", r.alpha.crps);
    kv("rho_crps", r.rho.crps);
    kv("alpha_entropy_median_clear", median(r.alpha.entropy_clear));
    kv("alpha_entropy_median_ambiguous", median(r.alpha.entropy_ambiguous));
    kv("rho_entropy_median_clear", median(r.rho.entropy_clear));
    kv("rho_entropy_median_ambiguous", median(r.rho.entropy_ambiguous));
    kv("multimodal_rate", r.multimodal_rate());
    kv("separated_samples", static_cast<double>(r.separated_samples));
  });
}

EvalReport evaluate_model(const ExperimentConfig& cfg, const NetworkModel& model, const Dataset& data,
                          const fs::path& out_dir) {
  const auto preds = predict_splits(model, data, cfg.eval.workers);
  EvalReport report = evaluate(data, preds, cfg.eval);
  write_eval_curves(out_dir, report, model.spec().bins, cfg.eval.kde_points);
  write_summary(out_dir / "summary.csv", report);
  return report;
}

std::string gamma_label(double gamma) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", gamma);
  return buf;
}

void write_sweep_chart(const fs::path& path, const std::vector<AggregateRow>& rows, bool timestamp) {
  LineChart chart{"AUSE vs hinge gamma", "gamma", "AUSE (ambiguous split)", {}};
  for (const char* head : {"alpha", "rho"}) {
    const std::size_t metric = std::string(head) == "alpha" ? 1 : 2;
    std::vector<std::pair<LossKind, TargetMode>> keys;
    for (const auto& r : rows) {
      if (std::find(keys.begin(), keys.end(), std::pair{r.loss, r.target_mode}) == keys.end()) {
        keys.emplace_back(r.loss, r.target_mode);
      }
    }
    for (const auto& [loss, mode] : keys) {
      ChartSeries s{std::string(head) + " " + std::string(to_string(loss)) +
                        (mode == TargetMode::Multimodal ? " (multimodal)" : ""),
                    {}};
      for (const auto& r : rows) {
        if (r.loss != loss || r.target_mode != mode) continue;
        s.points.push_back({r.gamma, r.mean[metric], r.standard_error ? (*r.standard_error)[metric] : 0.0});
      }
      std::sort(s.points.begin(), s.points.end(), [](const ChartPoint& a, const ChartPoint& b) { return a.x < b.x; });
      chart.series.push_back(std::move(s));
    }
  }
  write_text(path, render_svg(chart, timestamp));
}

}  // namespace

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigError("cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
}

DatasetManifest cmd_gen_data(const ExperimentConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  ensure_directory(out_dir);
  const Dataset data = generate_dataset(cfg.dataset, cfg.dataset_seed, std::max<std::size_t>(cfg.train.workers, 1));
  DatasetManifest manifest = write_dataset(data, out_dir);
  write_text(out_dir / "config.ini", cfg.text);
  log << "wrote " << manifest.records.size() << " images to " << out_dir.string() << '\n';
  for (Split s : {Split::Train, Split::TestClear, Split::TestAmbiguous}) {
    log << "  " << to_string(s) << ": " << manifest.count(s) << '\n';
  }
  log << "  base seed " << manifest.base_seed << '\n';
  return manifest;
}

TrainResult cmd_train(const ExperimentConfig& cfg, const fs::path& data_dir, const fs::path& out_dir,
                      std::ostream& log) {
  const Dataset data = load_data(data_dir);
  ensure_directory(out_dir);
  write_text(out_dir / "config.ini", cfg.text);
  TrainResult result = train(data, cfg.model, cfg.train, [&](const EpochRecord& r) {
    log << "epoch " << r.epoch << " loss " << fmt6(r.train_loss) << " clear_auc " << fmt6(r.clear_auc) << '\n';
  });
  save_checkpoint(result.model, out_dir / kCheckpointName);
  write_with(out_dir / "history.csv", [&](std::ostream& out) { write_history_csv(out, result.history); });
  log << "best epoch " << result.best_epoch << ", checkpoint " << (out_dir / kCheckpointName).string() << '\n';
  return result;
}

EvaluateOutput cmd_evaluate(const ExperimentConfig& cfg, const fs::path& checkpoint, const fs::path& data_dir,
                            const fs::path& out_dir, std::ostream& log) {
  if (!fs::exists(checkpoint)) throw ConfigError("checkpoint does not exist: " + checkpoint.string());
  const NetworkModel model = load_checkpoint(checkpoint, cfg.model);
  const Dataset data = load_data(data_dir);
  ensure_directory(out_dir);
  write_text(out_dir / "config.ini", cfg.text);
  EvaluateOutput out{{}, evaluate_model(cfg, model, data, out_dir)};
  out.row = make_row(cfg.train, out.report);
  write_with(out_dir / "results.csv", [&](std::ostream& o) { write_results_csv(o, {out.row}); });
  log << "auc " << fmt6(out.report.auc) << " alpha_ause " << fmt6(out.row.metrics[1]) << " rho_ause "
      << fmt6(out.row.metrics[2]) << " alpha_crps " << fmt6(out.row.metrics[3]) << " rho_crps "
      << fmt6(out.row.metrics[4]) << '\n';
  return out;
}

std::string SweepCell::name() const {
  return std::string(to_string(loss)) + "_g" + gamma_label(gamma) + "_" + std::string(to_string(target_mode)) + "_s" +
         std::to_string(seed);
}

std::vector<SweepCell> sweep_cells(const SweepConfig& sweep) {
  sweep.validate();
  std::vector<SweepCell> cells;
  for (LossKind loss : sweep.losses) {
    const std::vector<double> gammas = loss == LossKind::HingeW1 ? sweep.gammas : std::vector<double>{0.0};
    for (double gamma : gammas) {
      for (TargetMode mode : sweep.target_modes) {
        for (std::uint64_t seed : sweep.seeds) cells.push_back({loss, gamma, mode, seed});
      }
    }
  }
  return cells;
}

SweepOutcome cmd_sweep(const ExperimentConfig& cfg, const std::optional<fs::path>& data_dir, const fs::path& out_dir,
                       bool svg_timestamp, std::ostream& log) {
  const auto cells = sweep_cells(cfg.sweep);
  ensure_directory(out_dir);
  write_text(out_dir / "config.ini", cfg.text);

  Dataset data;
  if (data_dir) {
    data = load_data(*data_dir);
  } else {
    data = generate_dataset(cfg.dataset, cfg.dataset_seed, std::max<std::size_t>(cfg.train.workers, 1));
    write_dataset(data, out_dir / "dataset");
  }

  std::vector<std::optional<ResultRow>> rows(cells.size());
  std::vector<std::string> errors(cells.size());
  std::mutex log_mutex;
  auto run_cell = [&](std::size_t i) {
    const SweepCell& cell = cells[i];
    const fs::path dir = out_dir / "cells" / cell.name();
    std::ostringstream cell_log;
    try {
      ensure_directory(dir);
      ExperimentConfig c = cfg;
      c.train.loss.kind = cell.loss;
      c.train.loss.hinge.gamma = cell.gamma;
      c.train.target_mode = cell.target_mode;
      c.train.seed = cell.seed;
      TrainResult result = train(data, c.model, c.train);
      save_checkpoint(result.model, dir / kCheckpointName);
      write_with(dir / "history.csv", [&](std::ostream& out) { write_history_csv(out, result.history); });
      const EvalReport report = evaluate_model(c, result.model, data, dir);
      const ResultRow row = make_row(c.train, report);
      write_with(dir / "results.csv", [&](std::ostream& out) { write_results_csv(out, {row}); });
      rows[i] = row;
      cell_log << cell.name() << ": auc " << fmt6(row.metrics[0]) << " alpha_ause " << fmt6(row.metrics[1]) << '\n';
    } catch (const std::exception& e) {
      errors[i] = e.what();
      std::error_code ec;
      if (fs::is_directory(dir, ec)) write_text(dir / "error.txt", std::string(e.what()) + '\n');
      cell_log << cell.name() << ": FAILED: " << e.what() << '\n';
    }
    std::lock_guard lock(log_mutex);
    log << cell_log.str() << std::flush;
  };

  const std::size_t jobs = std::clamp<std::size_t>(cfg.sweep.jobs, 1, cells.size());
  if (jobs == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(i);
      });
    }
  }

  // Reduce over the per-cell CSVs so the table reflects what is on disk.
  SweepOutcome outcome;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!rows[i]) {
      outcome.failures.emplace_back(cells[i].name(), errors[i]);
      continue;
    }
    std::ifstream in(out_dir / "cells" / cells[i].name() / "results.csv");
    const auto cell_rows = read_results_csv(in);
    outcome.rows.insert(outcome.rows.end(), cell_rows.begin(), cell_rows.end());
  }
  outcome.aggregate = aggregate(outcome.rows);
  write_with(out_dir / "results.csv", [&](std::ostream& out) { write_results_csv(out, outcome.rows); });
  write_with(out_dir / "aggregate.csv", [&](std::ostream& out) { write_aggregate_csv(out, outcome.aggregate); });
  write_with(out_dir / "failures.csv", [&](std::ostream& out) {
    out << "cell,message\n";
    for (const auto& [name, msg] : outcome.failures) {
      std::string flat = msg;
      std::replace(flat.begin(), flat.end(), '\n', ' ');
      std::replace(flat.begin(), flat.end(), ',', ';');
      out << name << ',' << flat << '\n';
    }
  });
  write_sweep_chart(out_dir / "ause_vs_gamma.svg", outcome.aggregate, svg_timestamp);
  log << outcome.rows.size() << " of " << cells.size() << " cells completed\n";
  return outcome;
}

double case1_calibrated_logit(std::size_t bins) {
  return std::log((1e6 - 1.0) / static_cast<double>(bins - 1));
}

double case2_calibrated_logit(std::size_t bins) {
  return std::log((1.0 - 1e-6) * static_cast<double>(bins - 1) / 1e-6);
}

std::vector<GradDemoRow> grad_demo(std::size_t bins, const std::vector<double>& sweep) {
  if (bins < 2) throw ConfigError("grad-demo needs at least 2 bins");
  const std::size_t target = bins / 2;
  const std::size_t wrong = (target + bins / 4) % bins == target ? (target + 1) % bins : (target + bins / 4) % bins;
  std::vector<GradDemoRow> rows;
  auto run = [&](const char* scenario, double t, bool calibrated) {
    std::vector<double> logits(bins, 0.0);
    if (std::string(scenario) == "case1") {
      std::fill(logits.begin(), logits.end(), t);
      logits[target] = 0.0;
    } else {
      logits[wrong] = t;
    }
    for (HeadKind head : {HeadKind::Softmax, HeadKind::Softplus}) {
      const GradAnalysis a = w1_grad_analysis(head, logits, target);
      const auto p = head_probs(head, logits);
      double other = 0.0;
      if (std::string(scenario) == "case1") {
        for (std::size_t k = 0; k < bins; ++k) {
          if (k != target) other = std::max(other, p[k]);
        }
      } else {
        other = p[wrong];
      }
      rows.push_back({scenario, head, t, calibrated, p[target], other, a.case1_score, a.grad_norm});
    }
  };
  for (double t : sweep) run("case1", t, false);
  run("case1", case1_calibrated_logit(bins), true);
  for (double t : sweep) run("case2", t, false);
  run("case2", case2_calibrated_logit(bins), true);
  return rows;
}

void cmd_grad_demo(std::size_t bins, const fs::path& out_dir, std::ostream& log) {
  ensure_directory(out_dir);
  std::vector<double> sweep;
  for (int t = 0; t <= 20; t += 2) sweep.push_back(t);
  const auto rows = grad_demo(bins, sweep);
  write_with(out_dir / "grad_demo.csv", [&](std::ostream& out) {
    out << "scenario,head,logit,calibrated,target_mass,wrong_mass,target_grad,grad_norm\n";
    for (const auto& r : rows) {
      out << r.scenario << ',' << to_string(r.head) << ',' << fmt6(r.logit) << ',' << (r.calibrated ? 1 : 0) << ','
          << fmt6(r.target_mass) << ',' << fmt6(r.wrong_mass) << ',' << fmt6(r.target_grad) << ','
          << fmt6(r.grad_norm) << '\n';
    }
  });
  for (const auto& r : rows) {
    if (!r.calibrated) continue;
    log << r.scenario << ' ' << to_string(r.head) << ": target mass " << fmt6(r.target_mass) << ", |dW1/dz_target| "
        << fmt6(r.target_grad) << ", gradient norm " << fmt6(r.grad_norm) << '\n';
  }
}

}  // namespace rbc::harness
