#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rbc/error.hpp"
#include "rbc/losses.hpp"
#include "rbc/metrics.hpp"
#include "support/loss_check.hpp"
#include "support/oracles.hpp"

namespace rbc {
namespace {

GridPtr grid(std::size_t k) { return share(make_linear_grid(0.0, 1.0, k)); }

Histogram random_hist(std::mt19937_64& rng, const GridPtr& g, bool sparse = false) {
  return Histogram(g, testing::random_simplex(rng, g->size(), sparse));
}

TEST(TransportOracle, MatchesHandSolvedPlans) {
  EXPECT_NEAR(testing::transport_optimum(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 1.0, 1e-15);
  EXPECT_NEAR(testing::transport_optimum(std::vector<double>{1, 0, 0}, std::vector<double>{0, 0, 1}), 2.0, 1e-15);
  EXPECT_NEAR(testing::transport_optimum(std::vector<double>{0.5, 0, 0.5}, std::vector<double>{0, 1, 0}), 1.0, 1e-15);
}

TEST(W1Cdf, Identity) {
  std::mt19937_64 rng(5);
  const Histogram p = random_hist(rng, grid(7));
  EXPECT_EQ(w1_cdf(p, p).value(), 0.0);
}

TEST(W1Cdf, OppositeOneHots) {
  const GridPtr g = grid(2);
  EXPECT_EQ(w1_cdf(Histogram(g, {1, 0}), Histogram(g, {0, 1})).value(), 1.0);
}

TEST(W1Cdf, MatchesTransportOptimumK4) {
  std::mt19937_64 rng(17);
  const GridPtr g = grid(4);
  for (int i = 0; i < 200; ++i) {
    const Histogram p = random_hist(rng, g, true), q = random_hist(rng, g, true);
    EXPECT_NEAR(w1_cdf(p, q).value(), testing::transport_optimum(p.probs(), q.probs()), 1e-9);
  }
}

TEST(W1Cdf, SymmetricAndTriangle) {
  std::mt19937_64 rng(23);
  const GridPtr g = grid(9);
  for (int i = 0; i < 200; ++i) {
    const Histogram a = random_hist(rng, g), b = random_hist(rng, g), c = random_hist(rng, g);
    EXPECT_EQ(w1_cdf(a, b).value(), w1_cdf(b, a).value());
    EXPECT_LE(w1_cdf(a, c).value(), w1_cdf(a, b).value() + w1_cdf(b, c).value() + 1e-12);
  }
}

TEST(W1Cdf, GridMismatchRejected) {
  EXPECT_THROW(w1_cdf(Histogram::uniform(grid(3)), Histogram::uniform(grid(4))), std::invalid_argument);
}

TEST(W1Dirac, Basics) {
  const GridPtr g = grid(3);
  EXPECT_EQ(w1_dirac(Histogram::one_hot(g, 1), 1).value(), 0.0);
  EXPECT_NEAR(w1_dirac(Histogram::uniform(g), 0).value(), 1.0, 1e-15);
}

TEST(W1Dirac, AgreesWithCdfForm) {
  std::mt19937_64 rng(29);
  for (int i = 0; i < 200; ++i) {
    const std::size_t k = 2 + rng() % 20;
    const GridPtr g = grid(k);
    const Histogram p = random_hist(rng, g);
    const std::size_t j = rng() % k;
    EXPECT_NEAR(w1_dirac(p, j).value(), w1_cdf(p, Histogram::one_hot(g, j)).value(), 1e-12);
  }
}

TEST(W1Dirac, SecondOrder) {
  const GridPtr g = grid(3);
  // sqrt((0 + 1 + 4) / 3)
  EXPECT_NEAR(w1_dirac(Histogram::uniform(g), 0, 2).value(), std::sqrt(5.0 / 3.0), 1e-15);
}

TEST(Hinge, ZeroGammaIsIdentity) {
  std::mt19937_64 rng(31);
  const Histogram p = random_hist(rng, grid(6));
  const Histogram r = hinge_renormalize(p, {});
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(r[k], p[k]);
}

TEST(Hinge, HandEvaluated) {
  const GridPtr g = grid(4);
  const Histogram r = hinge_renormalize(Histogram(g, {0.7, 0.1, 0.1, 0.1}), {0.25});
  EXPECT_NEAR(r[0], 1.0, 1e-15);
  EXPECT_EQ(r[1], 0.0);
}

TEST(Hinge, UniformBelowHingeFallsBack) {
  const GridPtr g = grid(8);
  const Histogram r = hinge_renormalize(Histogram::uniform(g), HingeConfig::random_guess(8));
  for (double v : r.probs()) EXPECT_NEAR(v, 1.0 / 8, 1e-15);
  HingeConfig strict{1.0 / 8, HingeFallback::Error};
  EXPECT_THROW(hinge_renormalize(Histogram::uniform(g), strict), NumericError);
}

TEST(HingeW1, ReducesToPlainW1) {
  std::mt19937_64 rng(37);
  const GridPtr g = grid(10);
  const Histogram p = random_hist(rng, g), q = random_hist(rng, g);
  EXPECT_EQ(hinge_w1(p, q, {}).value(), w1_cdf(p, q).value());
}

TEST(HingeW1, PerturbedOneHotWitness) {
  const GridPtr g = grid(10);
  const double eps = 0.05;  // eps / K = 0.005 < gamma
  std::vector<double> probs(10, eps / 10);
  probs[3] += 1.0 - eps;
  const Histogram p(g, probs), q = Histogram::one_hot(g, 3);
  EXPECT_EQ(hinge_w1(p, q, {0.01}).value(), 0.0);
  EXPECT_GT(w1_cdf(p, q).value(), 0.0);
}

TEST(HingeW1, OneHotSurvives) {
  const GridPtr g = grid(5);
  const Histogram q = Histogram::one_hot(g, 2);
  EXPECT_EQ(hinge_w1(q, q, {0.9}).value(), 0.0);
}

TEST(Nll, Basics) {
  const GridPtr g = grid(6);
  EXPECT_NEAR(nll(Histogram::one_hot(g, 2), Histogram::one_hot(g, 2)).value(), 0.0, 1e-11);
  EXPECT_NEAR(nll(Histogram::uniform(g), Histogram::one_hot(g, 2)).value(), std::log(6.0), 1e-10);
}

TEST(Nll, SelfCrossEntropyIsEntropy) {
  const GridPtr g = grid(21);
  const Histogram q = gaussian_smooth(Histogram::one_hot(g, 10), 2.0);
  EXPECT_NEAR(nll(q, q).value(), entropy(q), 1e-9);
}

TEST(LossValue, RejectsNegativeAndNonFinite) {
  EXPECT_THROW(LossValue(-1.0), NumericError);
  EXPECT_THROW(LossValue(std::nan("")), NumericError);
}

TEST(LossGrad, TwoBinSoftmaxDirac) {
  const GridPtr g = grid(2);
  const std::vector<double> z = {0.0, 0.0};
  const auto grad = loss_grad(HeadKind::Softmax, z, Histogram::one_hot(g, 0), LossKind::W1);
  EXPECT_NEAR(grad[0], -0.25, 1e-12);
  EXPECT_NEAR(grad[1], 0.25, 1e-12);
  testing::LossCase c{HeadKind::Softmax, LossKind::W1, z, Histogram::one_hot(g, 0), {}};
  const auto fd = testing::central_difference([&](std::span<const double> x) { return testing::loss_value(c, x); },
                                              z, 1e-6);
  EXPECT_NEAR(fd[0], -0.25, 1e-8);
}

TEST(LossGrad, SoftplusAtOneHotMinimum) {
  const GridPtr g = grid(5);
  std::vector<double> z(5, -60.0);
  z[2] = 5.0;
  const auto grad = loss_grad(HeadKind::Softplus, z, Histogram::one_hot(g, 2), LossKind::W1);
  double norm = 0.0;
  for (double v : grad) norm += v * v;
  EXPECT_LT(std::sqrt(norm), 1e-12);
}

TEST(LossGrad, MatchesFiniteDifferences) {
  for (HeadKind head : {HeadKind::Softmax, HeadKind::Softplus}) {
    for (LossKind loss : {LossKind::Nll, LossKind::W1, LossKind::HingeW1}) {
      int checked = 0;
      for (std::uint64_t seed = 1; checked < 30; ++seed) {
        const auto err = testing::gradient_error(testing::random_loss_case(seed, head, loss));
        if (!err) continue;
        ++checked;
        EXPECT_LE(*err, 1e-4) << to_string(head) << '/' << to_string(loss) << " seed " << seed;
      }
    }
  }
}

TEST(LossGrad, LossMatchesStandaloneFunctions) {
  std::mt19937_64 rng(41);
  const GridPtr g = grid(12);
  std::normal_distribution<double> n(0, 2);
  std::vector<double> z(12);
  for (auto& v : z) v = n(rng);
  const Histogram q = random_hist(rng, g);
  const Histogram p = softmax_head(g, z);
  EXPECT_NEAR(loss_and_grad(HeadKind::Softmax, z, q, LossKind::W1).loss, w1_cdf(p, q).value(), 1e-12);
  EXPECT_NEAR(loss_and_grad(HeadKind::Softmax, z, q, LossKind::Nll).loss, nll(p, q).value(), 1e-12);
  EXPECT_NEAR(loss_and_grad(HeadKind::Softmax, z, q, LossKind::HingeW1, {0.05}).loss,
              hinge_w1(p, q, {0.05}).value(), 1e-12);
}

TEST(GradAnalysis, ClosedFormMatchesGeneric) {
  std::mt19937_64 rng(43);
  std::normal_distribution<double> n(0, 2);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> z(16);
    for (auto& v : z) v = n(rng);
    const std::size_t j = rng() % 16;
    const auto a = softmax_w1_grad_analysis(z, j), b = w1_grad_analysis(HeadKind::Softmax, z, j);
    for (std::size_t k = 0; k < 16; ++k) EXPECT_NEAR(a.grad[k], b.grad[k], 1e-12);
  }
}

TEST(GradAnalysis, VanishingCases) {
  constexpr std::size_t k = 64, j = 32;
  std::vector<double> z(k, std::log((1e6 - 1.0) / (k - 1)));
  z[j] = 0.0;
  const auto case1 = softmax_w1_grad_analysis(z, j);
  EXPECT_NEAR(head_probs(HeadKind::Softmax, z)[j], 1e-6, 1e-12);
  EXPECT_LT(case1.case1_score, 1e-4);

  std::vector<double> w(k, 0.0);
  w[j + k / 4] = std::log((1.0 - 1e-6) * (k - 1) / 1e-6);
  EXPECT_NEAR(head_probs(HeadKind::Softmax, w)[j + k / 4], 1.0 - 1e-6, 1e-12);
  EXPECT_LT(softmax_w1_grad_analysis(w, j).grad_norm, 1e-3);
  EXPECT_GT(w1_grad_analysis(HeadKind::Softplus, w, j).grad_norm, softmax_w1_grad_analysis(w, j).grad_norm);
}

TEST(GradAnalysis, OneHotGivesZeroGradient) {
  std::vector<double> z(8, -800.0);
  z[5] = 0.0;
  const auto a = softmax_w1_grad_analysis(z, 5);
  for (double v : a.grad) EXPECT_EQ(v, 0.0);
}

TEST(Parse, NamesRoundTrip) {
  for (LossKind l : {LossKind::Nll, LossKind::W1, LossKind::HingeW1}) EXPECT_EQ(parse_loss_kind(to_string(l)), l);
  for (HeadKind h : {HeadKind::Softmax, HeadKind::Softplus}) EXPECT_EQ(parse_head_kind(to_string(h)), h);
  EXPECT_THROW(parse_loss_kind("l2"), std::invalid_argument);
}

}  // namespace
}  // namespace rbc
