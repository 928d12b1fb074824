#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "objective_fixture.hpp"
#include "sagda/adversarial.hpp"
#include "sagda/error.hpp"
#include "test_util.hpp"

using namespace sagda;
using sagda::testing::expect_near;
using sagda::testing::finite_difference_error;
using sagda::testing::ObjectiveFixture;
using sagda::testing::random_tensor;

namespace {

double loop_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits(i, c));
    total += -(logits(i, static_cast<std::size_t>(labels[i])) - std::log(z));
  }
  return total / static_cast<double>(logits.rows());
}

double loop_entropy(const Tensor& logits) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits(i, c));
    for (std::size_t c = 0; c < logits.cols(); ++c) {
      const double p = std::exp(logits(i, c)) / z;
      if (p > 0.0) total -= p * std::log(p);
    }
  }
  return total / static_cast<double>(logits.rows());
}

double loop_bce(const Tensor& scores, const std::vector<int>& ids) {
  double total = 0.0;
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const double s = scores(i, 0);
    total -= ids[i] == 1 ? std::log(std::max(s, 1e-12)) : std::log(std::max(1.0 - s, 1e-12));
  }
  return total / static_cast<double>(scores.rows());
}

double eval(const std::function<Var(Tape&)>& build) {
  Tape tape;
  return build(tape).value().scalar();
}

}  // namespace

TEST(SourceLoss, Examples) {
  const std::vector<int> labels = {0, 2, 1};
  Tensor confident(3, 3, -50.0);
  for (std::size_t i = 0; i < 3; ++i) confident(i, static_cast<std::size_t>(labels[i])) = 50.0;
  EXPECT_LT(eval([&](Tape& t) { return source_loss(t.constant(confident), labels); }), 1e-40);
  EXPECT_NEAR(eval([&](Tape& t) { return source_loss(t.constant(Tensor(5, 4)), std::vector<int>(5, 3)); }),
              std::log(4.0), 1e-15);
}

TEST(SourceLoss, MatchesLoopOracle) {
  Rng rng(71);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor logits = random_tensor(6, 3, rng, -4.0, 4.0);
    std::vector<int> labels(6);
    for (int& y : labels) y = static_cast<int>(rng.below(3));
    const double value = eval([&](Tape& t) { return source_loss(t.constant(logits), labels); });
    EXPECT_NEAR(value, loop_cross_entropy(logits, labels), 1e-12);
    EXPECT_GE(value, 0.0);
  }
}

TEST(SourceLoss, Errors) {
  Tape tape;
  EXPECT_THROW(source_loss(tape.constant(Tensor(2, 3)), std::vector<int>{0, 3}), ContractError);
  EXPECT_THROW(source_loss(tape.constant(Tensor(2, 3)), std::vector<int>{0}), DimensionError);
}

TEST(TargetEntropy, Examples) {
  Tensor one_hot(4, 5, -60.0);
  for (std::size_t i = 0; i < 4; ++i) one_hot(i, i) = 60.0;
  EXPECT_LT(eval([&](Tape& t) { return target_entropy_loss(t.constant(one_hot)); }), 1e-40);
  EXPECT_NEAR(eval([&](Tape& t) { return target_entropy_loss(t.constant(Tensor(3, 6, 0.7))); }),
              std::log(6.0), 1e-15);
  // Underflowing probabilities contribute 0 log 0 = 0, never NaN.
  EXPECT_EQ(eval([&](Tape& t) { return target_entropy_loss(t.constant(Tensor::from_rows({{2000, 0}}))); }),
            0.0);
}

TEST(TargetEntropy, MatchesLoopOracleAndRange) {
  Rng rng(72);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor logits = random_tensor(7, 4, rng, -5.0, 5.0);
    const double value = eval([&](Tape& t) { return target_entropy_loss(t.constant(logits)); });
    EXPECT_NEAR(value, loop_entropy(logits), 1e-12);
    EXPECT_GE(value, 0.0);
    EXPECT_LE(value, std::log(4.0));
  }
}

TEST(TargetEntropy, GradientStepSharpensPredictions) {
  Rng rng(73);
  Tensor logits = random_tensor(10, 3, rng);
  const double before = loop_entropy(logits);
  Tape tape;
  Var x = tape.leaf(logits);
  tape.backward(target_entropy_loss(x));
  axpy(-0.5, x.grad(), logits);
  EXPECT_LT(loop_entropy(logits), before);
}

TEST(DomainLoss, Examples) {
  const std::vector<int> ids = {0, 0, 1, 1};
  EXPECT_NEAR(eval([&](Tape& t) { return domain_loss(t.constant(Tensor(4, 1, 0.5)), ids); }),
              std::numbers::ln2, 1e-15);
  const Tensor perfect = Tensor::from_rows({{0}, {0}, {1}, {1}});
  EXPECT_EQ(eval([&](Tape& t) { return domain_loss(t.constant(perfect), ids); }), 0.0);
  // Fully wrong scores hit the log floor instead of infinity.
  const Tensor wrong = Tensor::from_rows({{1}, {1}, {0}, {0}});
  EXPECT_NEAR(eval([&](Tape& t) { return domain_loss(t.constant(wrong), ids); }), -std::log(1e-12),
              1e-12);
}

TEST(DomainLoss, MatchesLoopOracle) {
  Rng rng(74);
  const std::vector<int> ids = {0, 0, 0, 0, 1, 1, 1, 1};
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor scores = random_tensor(8, 1, rng, 0.01, 0.99);
    const double value = eval([&](Tape& t) { return domain_loss(t.constant(scores), ids); });
    EXPECT_NEAR(value, loop_bce(scores, ids), 1e-12);
    EXPECT_GE(value, 0.0);
  }
}

TEST(DomainLoss, Errors) {
  Tape tape;
  EXPECT_THROW(domain_loss(tape.constant(Tensor(3, 1, 0.5)), std::vector<int>{0, 1}), DimensionError);
  EXPECT_THROW(domain_loss(tape.constant(Tensor(2, 1, 0.5)), std::vector<int>{0, 2}), ContractError);
}

TEST(Heads, InitShapes) {
  Rng rng(75);
  Heads h = Heads::init(16, 3, rng);
  EXPECT_EQ(h.label_weight.value.shape_string(), "(16x3)");
  EXPECT_EQ(h.label_bias.value.shape_string(), "(1x3)");
  EXPECT_EQ(h.domain_weight.value.shape_string(), "(16x1)");
  EXPECT_EQ(h.num_classes(), 3u);
  EXPECT_THROW(Heads::init(16, 1, rng), ContractError);
}

TEST(DomainScores, AreProbabilities) {
  Rng rng(76);
  Heads h = Heads::init(4, 2, rng);
  Tape tape;
  const Tensor s = domain_scores(tape.constant(random_tensor(9, 4, rng, -3, 3)), bind(tape, h)).value();
  for (double v : s.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(TotalObjective, ZeroWeightsLeaveSourceLoss) {
  ObjectiveFixture fx = ObjectiveFixture::make(1);
  Tape tape;
  const LossBreakdown l = fx.build(tape, true, 0.0, 0.0).values();
  EXPECT_EQ(l.total, l.source);
  EXPECT_GT(l.target, 0.0);
  EXPECT_GT(l.domain, 0.0);
}

TEST(TotalObjective, TotalIsWeightedSum) {
  ObjectiveFixture fx = ObjectiveFixture::make(2);
  Tape tape;
  const LossBreakdown l = fx.build(tape, true, 0.3, 0.1).values();
  EXPECT_NEAR(l.total, l.source + 0.3 * l.target + 0.1 * l.domain, 1e-15);
}

TEST(TotalObjective, GradientMatchesFiniteDifferences) {
  ObjectiveFixture fx = ObjectiveFixture::make(3);
  fx.zero_grad();
  {
    Tape tape;
    tape.backward(fx.build(tape, false).total);
  }
  auto f = [&] { return eval([&](Tape& t) { return fx.build(t, false).total; }); };
  for (Parameter* p : fx.params()) {
    const Tensor analytic = p->grad;
    EXPECT_LT(finite_difference_error(f, p->value, analytic), 1e-4) << p->name;
  }
}

TEST(TotalObjective, GrlGradientIsTheMinimaxGradient) {
  // Encoder parameters descend L_s + g1 L_t - g2 L_D; heads descend the total.
  ObjectiveFixture fx = ObjectiveFixture::make(4);
  fx.cfg.gamma2 = 0.7;  // make the reversed term prominent
  fx.zero_grad();
  {
    Tape tape;
    tape.backward(fx.build(tape, true).total);
  }
  auto total = [&] { return eval([&](Tape& t) { return fx.build(t, false).total; }); };
  auto minimax = [&] {
    Tape t;
    const ObjectiveVars o = fx.build(t, false);
    return o.source.value().scalar() + fx.cfg.gamma1 * o.target.value().scalar() -
           fx.cfg.gamma2 * o.domain.value().scalar();
  };
  for (Parameter* p : fx.params()) {
    const Tensor analytic = p->grad;
    const auto& f = fx.is_encoder(p) ? std::function<double()>(minimax) : std::function<double()>(total);
    EXPECT_LT(finite_difference_error(f, p->value, analytic), 1e-4) << p->name;
  }
}

TEST(Grl, DomainGradientsAreExactlyNegatedForEncoderOnly) {
  ObjectiveFixture fx = ObjectiveFixture::make(5);
  auto domain_grads = [&](bool use_grl) {
    fx.zero_grad();
    Tape tape;
    tape.backward(fx.build(tape, use_grl).domain);
    std::vector<Tensor> out;
    for (Parameter* p : fx.params()) out.push_back(p->grad);
    return out;
  };
  const auto with = domain_grads(true);
  const auto without = domain_grads(false);
  const auto params = fx.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (fx.is_encoder(params[i])) {
      EXPECT_LE(max_abs_diff(with[i], -1.0 * without[i]), 1e-12) << params[i]->name;
    } else {
      EXPECT_EQ(with[i], without[i]) << params[i]->name;
    }
  }
  // The domain head is trained by the domain loss; the label head is not.
  EXPECT_GT(max_abs(with[7]), 0.0);
  EXPECT_EQ(max_abs(with[5]), 0.0);
}

TEST(Argmax, TiesGoToLowestIndex) {
  EXPECT_EQ(argmax_rows(Tensor::from_rows({{1, 3, 3}, {2, 2, 2}, {0, 0, 5}})),
            (std::vector<int>{1, 0, 2}));
}

TEST(Accuracy, CountsHits) {
  EXPECT_DOUBLE_EQ(accuracy(std::vector<int>{0, 1, 1, 0}, std::vector<int>{0, 1, 0, 0}), 0.75);
  EXPECT_THROW(accuracy(std::vector<int>{0}, std::vector<int>{0, 1}), DimensionError);
}
