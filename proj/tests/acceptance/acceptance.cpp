// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criteria 8-12 train twelve models on the default dataset
// and take a while on a single core.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "rbc/harness/commands.hpp"
#include "rbc/harness/evaluation.hpp"
#include "rbc/losses.hpp"
#include "rbc/metrics.hpp"
#include "rbc/trainer.hpp"
#include "support/loss_check.hpp"
#include "support/oracles.hpp"

using namespace rbc;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and thresholds.
constexpr double kTransportTol = 1e-9;
constexpr double kTransportSeconds = 10.0;
constexpr std::size_t kTransportPairs = 1000;
constexpr std::size_t kProperPairs = 10000;
constexpr std::size_t kHingeWitnesses = 100;
constexpr std::size_t kGradSeeds = 100;
constexpr double kGradRelTol = 1e-4;
constexpr double kCase1GradMax = 1e-4;
constexpr double kCase2NormMax = 1e-3;
constexpr double kGradDemoSeconds = 1.0;
constexpr std::size_t kAuseDraws = 500;
constexpr double kAuseTol = 1e-12;
constexpr double kIdentityTol = 1e-9;
constexpr double kAuseRatioMax = 0.8;
constexpr double kCrpsRatioMax = 0.95;
constexpr double kAucDropMin = 5.0;  // points on the x100 scale
constexpr double kMultimodalRateMin = 0.3;
const std::vector<std::uint64_t> kSeeds = {1, 2, 3};
constexpr std::uint64_t kDatasetSeed = 1;

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

GridPtr index_grid(std::size_t k) { return share(make_linear_grid(0.0, static_cast<double>(k - 1), k)); }

void criterion1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (std::size_t i = 0; i < kTransportPairs; ++i) {
    const std::size_t k = 2 + rng() % 7;
    const GridPtr g = index_grid(k);
    const Histogram p(g, testing::random_simplex(rng, k, i % 2)), q(g, testing::random_simplex(rng, k, i % 3 == 0));
    worst = std::max(worst, std::abs(w1_cdf(p, q).value() - testing::transport_optimum(p.probs(), q.probs())));
  }
  const double secs = seconds_since(t0);
  report(1, worst <= kTransportTol && secs < kTransportSeconds,
         fmt::format("{} pairs, K<=8: max |w1_cdf - transport LP| = {:.3g} (tol {:.0e}), {:.2f} s", kTransportPairs,
                     worst, kTransportTol, secs));
}

void criterion2() {
  std::mt19937_64 rng(202);
  std::size_t positive = 0, self_zero = 0;
  for (std::size_t i = 0; i < kProperPairs; ++i) {
    const std::size_t k = 2 + rng() % 63;
    const GridPtr g = index_grid(k);
    const auto qv = testing::random_simplex(rng, k, i % 2);
    std::vector<double> pv;
    if (i % 4 == 0) {
      // A near-copy of q: move a little mass between two bins.
      pv = qv;
      std::size_t a = rng() % k;
      while (pv[a] == 0.0) a = (a + 1) % k;
      const std::size_t b = (a + 1 + rng() % (k - 1)) % k;
      const double d = std::min(pv[a], 1e-6);
      pv[a] -= d;
      pv[b] += d;
    } else {
      pv = testing::random_simplex(rng, k, i % 3 == 0);
    }
    const Histogram p(g, pv), q(g, qv);
    if (pv == qv) {
      --i;
      continue;
    }
    positive += w1_cdf(p, q).value() > 0.0;
    self_zero += w1_cdf(q, q).value() == 0.0;
  }
  report(2, positive == kProperPairs && self_zero == kProperPairs,
         fmt::format("{} random p != q: w1_cdf > 0 in {}; w1_cdf(q,q) == 0 exactly in {}", kProperPairs, positive,
                     self_zero));
}

void criterion3() {
  std::mt19937_64 rng(303);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < kHingeWitnesses; ++i) {
    const std::size_t k = 2 + rng() % 127;
    const double gamma = std::uniform_real_distribution<double>(1e-4, 0.45)(rng);
    const std::size_t j = rng() % k;
    // Uniform perturbation whose per-bin share eps/K stays under the hinge.
    const double eps = 0.5 * std::min(1.0, gamma * static_cast<double>(k));
    std::vector<double> pv(k, eps / static_cast<double>(k));
    pv[j] += 1.0 - eps;
    const GridPtr g = index_grid(k);
    const Histogram p(g, pv), q = Histogram::one_hot(g, j);
    ok += hinge_w1(p, q, {gamma}).value() == 0.0 && w1_cdf(p, q).value() > 0.0;
  }
  report(3, ok == kHingeWitnesses,
         fmt::format("{} random (K, gamma, j*): witness p != q with hinge loss exactly 0 in {}", kHingeWitnesses, ok));
}

void criterion4() {
  double worst = 0.0;
  std::size_t skipped = 0;
  std::string per_pair;
  for (HeadKind head : {HeadKind::Softmax, HeadKind::Softplus}) {
    for (LossKind loss : {LossKind::Nll, LossKind::W1, LossKind::HingeW1}) {
      double pair_worst = 0.0;
      std::size_t checked = 0;
      for (std::uint64_t seed = 1; checked < kGradSeeds; ++seed) {
        const auto err = testing::gradient_error(testing::random_loss_case(seed * 7919 + 13, head, loss));
        if (!err) {
          ++skipped;
          continue;
        }
        ++checked;
        pair_worst = std::max(pair_worst, *err);
      }
      worst = std::max(worst, pair_worst);
      per_pair += fmt::format(" {}/{}={:.2g}", to_string(head), to_string(loss), pair_worst);
    }
  }
  report(4, worst <= kGradRelTol,
         fmt::format("max rel err {:.3g} (tol {:.0e}) over {} seeds per pair, {} kink-adjacent draws skipped;{}", worst,
                     kGradRelTol, kGradSeeds, skipped, per_pair));
}

void criterion5() {
  const auto t0 = Clock::now();
  constexpr std::size_t k = 64, j = k / 2, wrong = j + k / 4;
  std::vector<double> z1(k, harness::case1_calibrated_logit(k));
  z1[j] = 0.0;
  std::vector<double> z2(k, 0.0);
  z2[wrong] = harness::case2_calibrated_logit(k);

  const double mass1 = head_probs(HeadKind::Softmax, z1)[j];
  const double mass2 = head_probs(HeadKind::Softmax, z2)[wrong];
  const auto s1 = softmax_w1_grad_analysis(z1, j), p1 = w1_grad_analysis(HeadKind::Softplus, z1, j);
  const auto s2 = softmax_w1_grad_analysis(z2, j), p2 = w1_grad_analysis(HeadKind::Softplus, z2, j);
  const double secs = seconds_since(t0);
  const bool pass = std::abs(mass1 - 1e-6) < 1e-12 && std::abs(mass2 - (1 - 1e-6)) < 1e-12 &&
                    s1.case1_score < kCase1GradMax && s2.grad_norm < kCase2NormMax &&
                    p1.case1_score > s1.case1_score && p2.grad_norm > s2.grad_norm && secs < kGradDemoSeconds;
  report(5, pass,
         fmt::format("case 1 (g_j*={:.1e}): softmax |dW1/dz_j*|={:.3g} softplus {:.3g}; case 2 (wrong mass "
                     "1-{:.1e}): softmax |grad|={:.3g} softplus {:.3g}; {:.4f} s",
                     mass1, s1.case1_score, p1.case1_score, 1 - mass2, s2.grad_norm, p2.grad_norm, secs));
}

void criterion6() {
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  bool perfect_zero = true;
  for (std::size_t i = 0; i < kAuseDraws; ++i) {
    const std::size_t n = 2 + rng() % 9;
    std::vector<EvalRecord> r(n);
    for (auto& x : r) {
      x.error = u(rng);
      // Every fourth draw uses coarse uncertainties so ties occur.
      x.uncertainty = i % 4 == 0 ? static_cast<double>(rng() % 3) : u(rng);
    }
    for (std::size_t steps : {1u, 10u, 100u}) {
      worst = std::max(worst, std::abs(sparsification(r, steps).ause - testing::exhaustive_ause(r, steps)));
    }
    for (auto& x : r) x.uncertainty = x.error;
    perfect_zero = perfect_zero && sparsification(r).ause == 0.0;
  }
  report(6, worst <= kAuseTol && perfect_zero,
         fmt::format("{} draws, n<=10: max |AUSE - exhaustive| = {:.3g} (tol {:.0e}); perfect ordering AUSE == 0: {}",
                     kAuseDraws, worst, kAuseTol, perfect_zero ? "yes" : "no"));
}

void criterion7() {
  std::mt19937_64 rng(707);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t k = 2 + rng() % 127;
    const GridPtr g = share(make_linear_grid(-1.0, 1.0, k));
    worst = std::max(worst, std::abs(entropy(Histogram::uniform(g)) - std::log(static_cast<double>(k))));
    worst = std::max(worst, std::abs(entropy(Histogram::one_hot(g, rng() % k))));
    std::uniform_real_distribution<double> v(-1.2, 1.5);
    const std::vector<double> values = {v(rng), v(rng), v(rng)};
    const DiracMixture mix = DiracMixture::equal(values);
    worst = std::max(worst, std::abs(crps_mixture(encode_mixture(g, mix), mix)));
    const LineParams l{std::uniform_real_distribution<double>(-1.0, 1.0)(rng),
                       std::uniform_real_distribution<double>(0.0, 60.0)(rng)};
    worst = std::max(worst, horizon_error(l, l, 64, 64));
  }
  report(7, worst <= kIdentityTol,
         fmt::format("entropy/crps/horizon identities on 200 random instances: max deviation {:.3g} (tol {:.0e})",
                     worst, kIdentityTol));
}

struct Run {
  harness::EvalReport report;
  double seconds;
};

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void experiment_criteria() {
  const harness::ExperimentConfig cfg = harness::default_config();
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  const auto t_all = Clock::now();
  const Dataset data = generate_dataset(cfg.dataset, kDatasetSeed, workers);
  std::printf("dataset: %zu train, %zu clear, %zu ambiguous (seed %llu)\n", data.train.size(), data.test_clear.size(),
              data.test_ambiguous.size(), static_cast<unsigned long long>(kDatasetSeed));

  const std::size_t k = cfg.model.bins;
  struct Setting {
    const char* name;
    LossKind loss;
    double gamma;
    TargetMode mode;
  };
  const std::vector<Setting> settings = {
      {"plain W1, unimodal", LossKind::W1, 0.0, TargetMode::Unimodal},
      {"hinge-W1 1/K, unimodal", LossKind::HingeW1, 1.0 / k, TargetMode::Unimodal},
      {"plain W1, multimodal", LossKind::W1, 0.0, TargetMode::Multimodal},
      {"hinge-W1 3/K, unimodal", LossKind::HingeW1, 3.0 / k, TargetMode::Unimodal},
  };
  std::vector<std::vector<Run>> runs(settings.size());
  harness::EvalConfig eval = cfg.eval;
  eval.workers = workers;
  for (std::size_t s = 0; s < settings.size(); ++s) {
    for (std::uint64_t seed : kSeeds) {
      TrainConfig tc = cfg.train;
      tc.loss = {settings[s].loss, {settings[s].gamma}};
      tc.target_mode = settings[s].mode;
      tc.seed = seed;
      tc.workers = workers;
      const auto t0 = Clock::now();
      const TrainResult tr = train(data, cfg.model, tc);
      Run run{harness::evaluate(data, harness::predict_splits(tr.model, data, workers), eval), seconds_since(t0)};
      const auto& r = run.report;
      std::printf("  %-24s seed %llu: auc %.4f  alpha AUSE %.4f  alpha CRPS %.4f  H(clear) %.3f  H(amb) %.3f  "
                  "multimodal %.3f  best epoch %zu  %.0f s\n",
                  settings[s].name, static_cast<unsigned long long>(seed), r.auc, r.alpha.sparsification.ause,
                  r.alpha.crps, median(r.alpha.entropy_clear), median(r.alpha.entropy_ambiguous), r.multimodal_rate(),
                  tr.best_epoch, run.seconds);
      std::fflush(stdout);
      runs[s].push_back(std::move(run));
    }
  }

  auto metric = [&](std::size_t s, auto fn) {
    std::vector<double> v;
    for (const auto& r : runs[s]) v.push_back(fn(r.report));
    return v;
  };
  const auto ause = [](const harness::EvalReport& r) { return r.alpha.sparsification.ause; };
  const auto crps = [](const harness::EvalReport& r) { return r.alpha.crps; };
  const auto auc = [](const harness::EvalReport& r) { return r.auc; };
  const auto gap = [](const harness::EvalReport& r) {
    return median(r.alpha.entropy_ambiguous) - median(r.alpha.entropy_clear);
  };
  const auto mm = [](const harness::EvalReport& r) { return r.multimodal_rate(); };

  const double ause_w1 = mean(metric(0, ause)), ause_hinge = mean(metric(1, ause)), ause_mm = mean(metric(2, ause));
  const double minutes = seconds_since(t_all) / 60.0;
  report(8, ause_hinge <= kAuseRatioMax * ause_w1 && ause_mm <= ause_hinge,
         fmt::format("mean alpha AUSE (ambiguous, {} seeds): hinge 1/K {:.4f}, plain W1 {:.4f} (ratio {:.3f}, need <= "
                     "{}); plain W1 multimodal {:.4f} (need <= hinge); {:.1f} min for 12 runs on {} thread(s)",
                     kSeeds.size(), ause_hinge, ause_w1, ause_hinge / ause_w1, kAuseRatioMax, ause_mm, minutes,
                     workers));

  const double crps_w1 = mean(metric(0, crps)), crps_hinge = mean(metric(1, crps));
  report(9, crps_hinge <= kCrpsRatioMax * crps_w1,
         fmt::format("mean alpha CRPS: hinge 1/K {:.4f}, plain W1 {:.4f} (ratio {:.3f}, need <= {})", crps_hinge,
                     crps_w1, crps_hinge / crps_w1, kCrpsRatioMax));

  const double auc_1 = 100.0 * mean(metric(1, auc)), auc_3 = 100.0 * mean(metric(3, auc));
  report(10, auc_1 - auc_3 >= kAucDropMin,
         fmt::format("mean AUC x100 ({} split): hinge 1/K {:.2f}, hinge 3/K {:.2f} (drop {:.2f}, need >= {})",
                     harness::to_string(eval.auc_split), auc_1, auc_3, auc_1 - auc_3, kAucDropMin));

  const auto gaps_hinge = metric(1, gap), gaps_w1 = metric(0, gap);
  std::string per_seed;
  for (std::size_t i = 0; i < kSeeds.size(); ++i) per_seed += fmt::format(" {:+.4f}", gaps_hinge[i]);
  report(11, mean(gaps_hinge) > 0.0,
         fmt::format("median alpha entropy, two-line minus one-line: hinge 1/K {:+.4f} (per seed:{}), plain W1 {:+.4f}",
                     mean(gaps_hinge), per_seed, mean(gaps_w1)));

  const double mm_hinge = mean(metric(1, mm)), mm_w1 = mean(metric(0, mm));
  report(12, mm_hinge >= kMultimodalRateMin,
         fmt::format("ambiguous samples with lines >= {} bins apart ({}): alpha histograms with >= 2 modes above "
                     "{}/K: hinge 1/K {:.3f} (need >= {}), plain W1 {:.3f}",
                     eval.min_mode_separation, runs[1].front().report.separated_samples, eval.mode_threshold,
                     mm_hinge, kMultimodalRateMin, mm_w1));
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  experiment_criteria();
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
