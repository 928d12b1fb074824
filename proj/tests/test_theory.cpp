#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sagda/error.hpp"
#include "sagda/theory.hpp"
#include "test_util.hpp"

using namespace sagda;
using sagda::testing::random_graph;
using sagda::testing::random_permutation;
using sagda::testing::random_tensor;

namespace {

Permutation inverse(const Permutation& p) {
  Permutation inv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = i;
  return inv;
}

FilterBank only_high(std::vector<double> coefficients) {
  FilterBank f;
  f.low.coefficients = {0.0};
  f.high.coefficients = std::move(coefficients);
  return f;
}

double pass_rate(const std::vector<BoundReport>& reports) {
  const auto hits = std::count_if(reports.begin(), reports.end(), [](const BoundReport& r) { return r.holds; });
  return static_cast<double>(hits) / static_cast<double>(reports.size());
}

double median_lhs(std::vector<BoundReport> reports) {
  std::vector<double> v;
  for (const auto& r : reports) v.push_back(r.lhs);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST(OptimalPermutation, RecoversInverseOfARelabeling) {
  Rng rng(91);
  for (int trial = 0; trial < 5; ++trial) {
    const Graph g = random_graph(7, 3, 2, rng, 0.4);
    const auto sigma = random_permutation(7, rng);
    const Graph h = g.permuted(sigma);
    const Permutation p = optimal_permutation(g, h);
    EXPECT_EQ(p, inverse(sigma));
    EXPECT_EQ(alignment_objective(g, h, p), 0.0);
  }
}

TEST(OptimalPermutation, SingleNodeIsIdentity) {
  const Graph g(Tensor(1, 1), Tensor(1, 2, 0.5), std::nullopt, 1);
  EXPECT_EQ(optimal_permutation(g, g), Permutation{0});
}

TEST(OptimalPermutation, BeatsRandomSampling) {
  Rng rng(92);
  for (int trial = 0; trial < 5; ++trial) {
    const Graph a = random_graph(5, 2, 2, rng, 0.5);
    const Graph b = random_graph(5, 2, 2, rng, 0.5);
    const double best = alignment_objective(a, b, optimal_permutation(a, b));
    for (int k = 0; k < 100; ++k) EXPECT_LE(best, alignment_objective(a, b, random_permutation(5, rng)));
  }
}

TEST(OptimalPermutation, TiesGoToLexicographicallySmallest) {
  // Identical nodes: every permutation scores 0.
  const Graph g(Tensor(4, 4), Tensor(4, 1, 1.0), std::nullopt, 1);
  EXPECT_EQ(optimal_permutation(g, g), (Permutation{0, 1, 2, 3}));
}

TEST(OptimalPermutation, Errors) {
  Rng rng(93);
  EXPECT_THROW(optimal_permutation(random_graph(4, 2, 2, rng), random_graph(5, 2, 2, rng)), DimensionError);
  EXPECT_THROW(optimal_permutation(random_graph(4, 2, 2, rng), random_graph(4, 3, 2, rng)), DimensionError);
  const Graph big = random_graph(9, 2, 2, rng);
  try {
    optimal_permutation(big, big);
    FAIL();
  } catch (const CapacityError& e) {
    EXPECT_NE(std::string(e.what()).find("greedy"), std::string::npos);
  }
}

TEST(OptimalPermutation, GreedyHandlesLargeRelabeledCopies) {
  Rng rng(94);
  const Graph g = random_graph(20, 3, 2, rng, 0.2);
  const auto sigma = random_permutation(20, rng);
  const Permutation p = optimal_permutation(g, g.permuted(sigma), PermutationSearch::Greedy);
  EXPECT_EQ(p, inverse(sigma));

  // On unrelated graphs it still returns a permutation.
  const Permutation q =
      optimal_permutation(g, random_graph(20, 3, 2, rng, 0.2), PermutationSearch::Greedy);
  Permutation sorted = q;
  std::sort(sorted.begin(), sorted.end());
  Permutation iota(20);
  std::iota(iota.begin(), iota.end(), 0);
  EXPECT_EQ(sorted, iota);
}

TEST(SpectralLipschitz, Examples) {
  EXPECT_EQ(spectral_lipschitz(FilterBank::defaults()), 0.0);
  EXPECT_NEAR(spectral_lipschitz(only_high({0.0, 0.5})), 0.5, 1e-15);
  EXPECT_NEAR(spectral_lipschitz(only_high({0.0, 0.0, 1.0})), 4.0, 1e-3);
  // g = (lambda - 1)^3: |g'| = 3 at both ends.
  EXPECT_NEAR(spectral_lipschitz(only_high({-1.0, 3.0, -3.0, 1.0})), 3.0, 1e-3);
  // g' = 1 - (lambda - 1)^2 peaks at lambda = 1 inside the interval.
  EXPECT_NEAR(spectral_lipschitz(only_high({0.0, 0.0, 1.0, -1.0 / 3.0})), 1.0, 1e-3);
}

TEST(VerifyBound, ZeroCaseForRelabeledCopies) {
  Rng rng(95);
  for (int trial = 0; trial < 10; ++trial) {
    const Graph g = random_graph(6, 3, 2, rng, 0.5);
    const Graph h = g.permuted(random_permutation(6, rng));
    const Tensor w = random_tensor(3, 2, rng);
    for (const FilterBank& f : {FilterBank::defaults(), only_high({0.0, 1.0})}) {
      VerifyConfig cfg;
      cfg.filters = f;
      const BoundReport r = verify_bound(g, h, w, cfg);
      EXPECT_LT(r.lhs, 1e-9);
      EXPECT_EQ(r.first_order_rhs, 0.0);
      EXPECT_EQ(r.delta_L, 0.0);
      EXPECT_EQ(r.delta_X, 0.0);
      EXPECT_TRUE(r.holds);
    }
  }
}

TEST(VerifyBound, WeightedCopiesMatchUpToRoundoff) {
  // Weighted degrees are summed in a permuted order, so Delta L is only ~1e-16.
  Rng rng(97);
  for (int trial = 0; trial < 10; ++trial) {
    const Graph g = random_graph(6, 3, 2, rng, 0.5, true);
    const BoundReport r = verify_bound(g, g.permuted(random_permutation(6, rng)), random_tensor(3, 2, rng));
    EXPECT_LT(r.lhs, 1e-9);
    EXPECT_LT(r.first_order_rhs, 1e-12);
    EXPECT_TRUE(r.holds);
  }
}

TEST(VerifyBound, AlphaZeroAnnihilatesEverything) {
  const PerturbedInstance inst = perturbed_instance(SweepConfig{}, 3);
  VerifyConfig cfg;
  cfg.alpha = 0.0;
  cfg.filters = only_high({0.2, 0.7});
  const BoundReport r = verify_bound(inst.source, inst.target, inst.weight, cfg);
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_EQ(r.linear_gap, 0.0);
  EXPECT_EQ(r.first_order_rhs, 0.0);
}

TEST(VerifyBound, LinearGapScalesWithAlpha) {
  SweepConfig sweep;
  sweep.epsilon = 0.05;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    const PerturbedInstance inst = perturbed_instance(sweep, trial);
    VerifyConfig cfg;
    cfg.filters = only_high({0.3, 0.5});
    cfg.alpha = 1.0;
    const BoundReport full = verify_bound(inst.source, inst.target, inst.weight, cfg);
    for (double alpha : {0.1, 0.45, 0.8}) {
      cfg.alpha = alpha;
      const BoundReport r = verify_bound(inst.source, inst.target, inst.weight, cfg);
      EXPECT_NEAR(r.linear_gap, alpha * full.linear_gap, 1e-10);
      // LeakyReLU is 1-Lipschitz, so the activated gap never exceeds the linear one.
      EXPECT_LE(r.lhs, r.linear_gap + 1e-15);
      EXPECT_NEAR(r.first_order_rhs, alpha * full.first_order_rhs, 1e-12);
    }
  }
}

TEST(VerifyBound, TauMatchesClosedForm) {
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    const PerturbedInstance inst = perturbed_instance(SweepConfig{}, trial);
    const BoundReport r = verify_bound(inst.source, inst.target, inst.weight);
    const Tensor us = eig_sym(normalized_laplacian(inst.source)).vectors;
    const Tensor ut = eig_sym(normalized_laplacian(inst.target)).vectors;
    double ss = 0.0;
    for (std::size_t i = 0; i < us.rows(); ++i)
      for (std::size_t j = 0; j < us.cols(); ++j) {
        const double diff = us(i, j) - ut(r.permutation[i], j);
        ss += diff * diff;
      }
    const double expected = std::pow(std::sqrt(ss) + 1.0, 2.0) - 1.0;
    EXPECT_NEAR(r.tau, expected, 1e-12);
    EXPECT_GE(r.tau, 0.0);
  }
}

TEST(VerifyBound, ReportFieldsAreConsistent) {
  SweepConfig sweep;
  sweep.epsilon = 0.02;
  sweep.trials = 20;
  sweep.verify.filters = only_high({0.0, 1.0});
  for (const BoundReport& r : perturbation_sweep(sweep)) {
    EXPECT_GE(r.lhs, 0.0);
    EXPECT_GE(r.lhs_literal, 0.0);
    EXPECT_GE(r.delta_L, 0.0);
    EXPECT_GE(r.delta_X, 0.0);
    EXPECT_GE(r.tau, 0.0);
    EXPECT_EQ(r.c_lambda, 1.0);
    EXPECT_EQ(r.holds, r.lhs <= r.first_order_rhs + kBoundRoundoff);
    EXPECT_NEAR(r.first_order_rhs, 0.8 * (r.c_lambda * (1 + r.tau) * r.delta_L + r.g_max * r.delta_X), 1e-15);
  }
}

TEST(VerifyBound, NormalizationMakesTheResultScaleFree) {
  const PerturbedInstance inst = perturbed_instance(SweepConfig{}, 5);
  const BoundReport a = verify_bound(inst.source, inst.target, inst.weight);
  const BoundReport b = verify_bound(inst.source.with_features(7.0 * inst.source.features()),
                                     inst.target.with_features(7.0 * inst.target.features()),
                                     0.01 * inst.weight);
  EXPECT_NEAR(a.lhs, b.lhs, 1e-12);
  EXPECT_NEAR(a.first_order_rhs, b.first_order_rhs, 1e-12);
}

TEST(VerifyBound, Errors) {
  Rng rng(96);
  const Graph g = random_graph(4, 3, 2, rng);
  EXPECT_THROW(verify_bound(g, random_graph(5, 3, 2, rng), random_tensor(3, 2, rng)), DimensionError);
  EXPECT_THROW(verify_bound(g, g, random_tensor(2, 2, rng)), DimensionError);
  VerifyConfig cfg;
  cfg.alpha = 1.5;
  EXPECT_THROW(verify_bound(g, g, random_tensor(3, 2, rng), cfg), ValidationError);
}

TEST(PerturbedInstance, DeterministicAndSmall) {
  SweepConfig sweep;
  const PerturbedInstance a = perturbed_instance(sweep, 7);
  const PerturbedInstance b = perturbed_instance(sweep, 7);
  EXPECT_EQ(a.target.adjacency(), b.target.adjacency());
  EXPECT_EQ(a.weight, b.weight);
  EXPECT_LT(max_abs_diff(a.source.adjacency(), a.target.adjacency()), 1e-3 * 6);
  EXPECT_LT(max_abs_diff(a.source.features(), a.target.features()), 1e-3 * 6);
  for (double d : degrees(a.source.adjacency())) EXPECT_GT(d, 0.0);
}

TEST(PerturbationSweep, FirstOrderBoundHoldsAtSmallEpsilon) {
  for (const FilterBank& f : {FilterBank::defaults(), only_high({0.0, 1.0}), only_high({1.0, -0.5, 0.3})}) {
    SweepConfig sweep;
    sweep.verify.filters = f;
    sweep.nodes = 7;
    const auto reports = perturbation_sweep(sweep);
    ASSERT_EQ(reports.size(), 100u);
    EXPECT_GE(pass_rate(reports), 0.95) << "filter high degree " << f.high.coefficients.size() - 1;
  }
}

TEST(PerturbationSweep, GapScalesLinearlyInEpsilon) {
  SweepConfig small, large;
  small.verify.filters = large.verify.filters = only_high({0.0, 1.0});
  small.trials = large.trials = 40;
  small.epsilon = 1e-3;
  large.epsilon = 1e-2;
  const double ratio = median_lhs(perturbation_sweep(large)) / median_lhs(perturbation_sweep(small));
  EXPECT_GT(ratio, 7.0);
  EXPECT_LT(ratio, 13.0);
}
