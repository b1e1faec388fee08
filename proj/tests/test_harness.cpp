#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "rbc/error.hpp"
#include "rbc/harness/commands.hpp"
#include "rbc/harness/config.hpp"
#include "rbc/harness/evaluation.hpp"
#include "rbc/harness/results.hpp"
#include "rbc/harness/svg.hpp"

namespace fs = std::filesystem;

namespace rbc::harness {
namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rbc_harness_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* kTinyConfig = R"(
[dataset]
width = 32
height = 32
train_one_line = 10
train_two_line = 10
test_clear = 8
test_ambiguous = 8

[model]
bins = 16
conv = 4, 8

[train]
epochs = 1
batch_size = 8

[sweep]
losses = w1, hinge_w1
gammas = 0, 1/K
seeds = 1, 2
)";

TEST(Config, DefaultsMatchDocumentedValues) {
  const ExperimentConfig c = default_config();
  EXPECT_EQ(c.model.bins, 64u);
  EXPECT_EQ(c.train.epochs, 10u);
  EXPECT_EQ(c.eval.measure, UncertaintyMeasure::Entropy);
  EXPECT_EQ(c.eval.ause_split, EvalSplit::Ambiguous);
  ASSERT_EQ(c.sweep.gammas.size(), 4u);
  EXPECT_EQ(c.sweep.gammas[2], 1.0 / 64);
}

TEST(Config, ParsesSectionsAndFractions) {
  const ExperimentConfig c = parse_config(kTinyConfig);
  EXPECT_EQ(c.dataset.width, 32u);
  EXPECT_EQ(c.model.width, 32u);
  ASSERT_EQ(c.model.conv.size(), 2u);
  EXPECT_EQ(c.model.conv[1].channels, 8u);
  EXPECT_EQ(c.sweep.gammas[1], 1.0 / 16);
  EXPECT_EQ(c.sweep.losses.size(), 2u);
  EXPECT_EQ(c.text, kTinyConfig);
}

TEST(Config, UnknownKeyNamesSectionAndKey) {
  try {
    parse_config("[train]\nepohcs = 3\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.epohcs"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config("[nonsense]\na = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nepochs = many\n"), ConfigError);
}

TEST(Config, EmptySweepListOnlyMattersForSweeps) {
  const ExperimentConfig c = parse_config("[sweep]\nseeds =\n");
  EXPECT_THROW(sweep_cells(c.sweep), ConfigError);
}

TEST(Config, MissingDataPathRejected) {
  EXPECT_THROW(parse_config("[paths]\ndata = /definitely/not/here\n"), ConfigError);
}

TEST(Config, RenderRoundTrip) {
  const ExperimentConfig a = parse_config(kTinyConfig);
  const ExperimentConfig b = parse_config(render_config(a));
  EXPECT_EQ(render_config(a), render_config(b));
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.dataset, b.dataset);
}

TEST(Results, AggregateStandardError) {
  std::vector<ResultRow> rows;
  for (int s = 1; s <= 3; ++s) rows.push_back({LossKind::W1, 0.0, TargetMode::Unimodal, std::uint64_t(s), {double(s)}});
  rows.push_back({LossKind::HingeW1, 0.25, TargetMode::Unimodal, 1, {7.0}});
  const auto agg = aggregate(rows);
  ASSERT_EQ(agg.size(), 2u);
  EXPECT_EQ(agg[0].n, 3u);
  EXPECT_DOUBLE_EQ(agg[0].mean[0], 2.0);
  ASSERT_TRUE(agg[0].standard_error);
  EXPECT_NEAR((*agg[0].standard_error)[0], 1.0 / std::sqrt(3.0), 1e-15);
  EXPECT_FALSE(agg[1].standard_error);
  std::ostringstream out;
  write_aggregate_csv(out, agg);
  EXPECT_NE(out.str().find("hinge_w1,0.25,unimodal,1,7,,"), std::string::npos) << out.str();
}

TEST(Results, CsvRoundTrip) {
  const std::vector<ResultRow> rows = {{LossKind::HingeW1, 0.015625, TargetMode::Multimodal, 4, {0.5, 0.25, 1, 2, 3}}};
  std::stringstream s;
  write_results_csv(s, rows);
  EXPECT_EQ(s.str().substr(0, s.str().find('\n')), "loss,gamma,target_mode,seed,auc,alpha_ause,rho_ause,alpha_crps,rho_crps");
  const auto back = read_results_csv(s);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].loss, LossKind::HingeW1);
  EXPECT_EQ(back[0].target_mode, TargetMode::Multimodal);
  EXPECT_EQ(back[0].metrics[4], 3.0);
}

class EvalOracles : public ::testing::Test {
 protected:
  void SetUp() override {
    SynthConfig c;
    c.width = c.height = 32;
    c.train_one_line = c.train_two_line = 100;
    c.test_clear = c.test_ambiguous = 60;
    data = generate_dataset(c, 5);
    auto [a, r] = make_grids(data, 32);
    ag = share(std::move(a));
    rg = share(std::move(r));
  }
  Dataset data;
  GridPtr ag, rg;
};

TEST_F(EvalOracles, MixturePredictorHasZeroCrps) {
  const EvalReport r = evaluate(data, predict_splits(mixture_predictor(ag, rg), data), EvalConfig{});
  EXPECT_NEAR(r.alpha.crps, 0.0, 1e-12);
  EXPECT_NEAR(r.rho.crps, 0.0, 1e-12);
}

TEST_F(EvalOracles, CalibratedPredictorHasZeroAuse) {
  EvalConfig cfg;
  for (EvalSplit s : {EvalSplit::Ambiguous, EvalSplit::Clear, EvalSplit::Pooled}) {
    cfg.ause_split = s;
    const EvalReport r = evaluate(data, predict_splits(calibrated_predictor(ag, rg), data), cfg);
    EXPECT_NEAR(r.alpha.sparsification.ause, 0.0, 1e-12) << to_string(s);
    EXPECT_NEAR(r.rho.sparsification.ause, 0.0, 1e-12) << to_string(s);
  }
}

TEST_F(EvalOracles, UniformPredictor) {
  const EvalReport r = evaluate(data, predict_splits(uniform_predictor(ag, rg), data), EvalConfig{});
  for (double h : r.alpha.entropy_clear) EXPECT_NEAR(h, std::log(32.0), 1e-12);
  for (double h : r.alpha.entropy_ambiguous) EXPECT_NEAR(h, std::log(32.0), 1e-12);
  for (std::size_t i = 0; i < 80; ++i) EXPECT_NEAR(r.alpha.sparsification.sparsification[i], 1.0, 0.35);
  EXPECT_EQ(r.multimodal_predictions, 0u);
  EXPECT_LT(r.auc, 0.2);
}

TEST_F(EvalOracles, MixturePredictorSeesTwoModes) {
  const EvalReport r = evaluate(data, predict_splits(mixture_predictor(ag, rg), data), EvalConfig{});
  EXPECT_GT(r.separated_samples, 0u);
  EXPECT_EQ(r.multimodal_predictions, r.separated_samples);
}

TEST(Svg, TimestampOnlyWhenAsked) {
  const LineChart c{"t", "x", "y", {{"a", {{0, 1, 0.1}, {1, 2, 0.1}}}}};
  const std::string with = render_svg(c, true), without = render_svg(c, false);
  EXPECT_NE(with.find("<polyline"), std::string::npos);
  EXPECT_EQ(without.find("generated"), std::string::npos);
  EXPECT_EQ(render_svg(c, false), without);
}

TEST(Sweep, CellGridShape) {
  SweepConfig s;
  s.gammas = {0, 0.5 / 64, 1.0 / 64, 1.5 / 64};
  s.seeds = {1, 2, 3};
  EXPECT_EQ(sweep_cells(s).size(), 12u);
  s.losses = {LossKind::W1, LossKind::HingeW1};
  EXPECT_EQ(sweep_cells(s).size(), 15u);
}

TEST(GradDemo, CalibratedScenarios) {
  const auto rows = grad_demo(64, {0.0, 10.0});
  const GradDemoRow *c1s = nullptr, *c1p = nullptr, *c2s = nullptr, *c2p = nullptr;
  for (const auto& r : rows) {
    if (!r.calibrated) continue;
    const bool soft = r.head == HeadKind::Softmax;
    if (r.scenario == "case1") (soft ? c1s : c1p) = &r;
    if (r.scenario == "case2") (soft ? c2s : c2p) = &r;
  }
  ASSERT_TRUE(c1s && c1p && c2s && c2p);
  EXPECT_NEAR(c1s->target_mass, 1e-6, 1e-12);
  EXPECT_LT(c1s->target_grad, 1e-4);
  EXPECT_GT(c1p->target_grad, c1s->target_grad);
  EXPECT_NEAR(c2s->wrong_mass, 1.0 - 1e-6, 1e-12);
  EXPECT_LT(c2s->grad_norm, 1e-3);
  EXPECT_GT(c2p->grad_norm, c2s->grad_norm);
}

TEST(Commands, GenTrainEvaluateSweep) {
  const fs::path root = scratch_dir("cmds");
  ExperimentConfig cfg = parse_config(kTinyConfig);
  std::ostringstream log;

  const DatasetManifest m = cmd_gen_data(cfg, root / "data", log);
  EXPECT_EQ(m.records.size(), 36u);
  for (const char* d : {"train", "test_clear", "test_ambiguous"}) EXPECT_TRUE(fs::is_directory(root / "data" / d));
  EXPECT_EQ(slurp(root / "data" / "config.ini"), kTinyConfig);
  const std::string manifest = slurp(root / "data" / "manifest.csv");
  cmd_gen_data(cfg, root / "data", log);
  EXPECT_EQ(slurp(root / "data" / "manifest.csv"), manifest);

  cmd_train(cfg, root / "data", root / "train", log);
  for (const char* f : {"checkpoint.rbck", "history.csv", "config.ini"}) EXPECT_TRUE(fs::exists(root / "train" / f));

  const std::string ckpt = slurp(root / "train" / "checkpoint.rbck");
  const auto ev = cmd_evaluate(cfg, root / "train" / "checkpoint.rbck", root / "data", root / "eval", log);
  EXPECT_EQ(slurp(root / "train" / "checkpoint.rbck"), ckpt);
  EXPECT_EQ(slurp(root / "data" / "manifest.csv"), manifest);
  for (const char* f : {"results.csv", "summary.csv", "alpha_sparsification.csv", "rho_sparsification.csv",
                        "alpha_entropy_kde.csv", "rho_entropy_kde.csv"}) {
    EXPECT_TRUE(fs::exists(root / "eval" / f)) << f;
  }
  EXPECT_TRUE(std::isfinite(ev.row.metrics[1]));

  const auto out = cmd_sweep(cfg, root / "data", root / "sweep", false, log);
  EXPECT_TRUE(out.failures.empty());
  EXPECT_EQ(out.rows.size(), 6u);
  EXPECT_EQ(out.aggregate.size(), 3u);
  const std::string results = slurp(root / "sweep" / "results.csv");
  cfg.sweep.jobs = 3;
  cmd_sweep(cfg, root / "data", root / "sweep2", false, log);
  EXPECT_EQ(slurp(root / "sweep2" / "results.csv"), results);
  EXPECT_EQ(slurp(root / "sweep2" / "ause_vs_gamma.svg"), slurp(root / "sweep" / "ause_vs_gamma.svg"));
  fs::remove_all(root);
}

TEST(Commands, SweepRecordsFailedCells) {
  const fs::path root = scratch_dir("fail");
  ExperimentConfig cfg = parse_config(kTinyConfig);
  cfg.sweep.losses = {LossKind::HingeW1};
  cfg.sweep.gammas = {0.0};
  cfg.train.adam.learning_rate = 1e300;
  std::ostringstream log;
  const auto out = cmd_sweep(cfg, std::nullopt, root, false, log);
  EXPECT_EQ(out.failures.size(), 2u);
  EXPECT_TRUE(fs::exists(root / "failures.csv"));
  EXPECT_TRUE(fs::exists(root / "aggregate.csv"));
  fs::remove_all(root);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RBC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

TEST(Cli, ExitCodes) {
  const fs::path root = scratch_dir("cli");
  fs::create_directories(root);
  {
    std::ofstream(root / "tiny.ini") << kTinyConfig;
    std::string diverge = kTinyConfig;
    diverge.replace(diverge.find("batch_size = 8"), 14, "batch_size = 8\nlearning_rate = 1e300");
    std::ofstream(root / "diverge.ini") << diverge;
  }
  const std::string cfg = " --config " + (root / "tiny.ini").string();
  EXPECT_EQ(run_cli("gen-data" + cfg + " --out " + (root / "d").string() + " --seed 4"), 0);
  EXPECT_EQ(run_cli("gen-data" + cfg + " --out /proc/rbc_cannot/exist"), 2);
  EXPECT_EQ(run_cli("train --config " + (root / "nope.ini").string() + " --out " + (root / "t").string()), 2);
  EXPECT_EQ(run_cli("train --config " + (root / "diverge.ini").string() + " --data " + (root / "d").string() +
                    " --out " + (root / "t").string()),
            3);
  EXPECT_EQ(run_cli("grad-demo --out " + (root / "g").string() + " --bins 16"), 0);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  fs::remove_all(root);
}

}  // namespace
}  // namespace rbc::harness
