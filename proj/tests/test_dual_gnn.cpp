#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "sagda/dual_gnn.hpp"
#include "sagda/error.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace sagda;
using sagda::testing::ppmi_oracle;
using sagda::testing::expect_near;
using sagda::testing::finite_difference_error;
using sagda::testing::random_graph;
using sagda::testing::random_permutation;
using sagda::testing::random_tensor;

namespace {

EncoderParams make_params(std::size_t d, std::size_t h1, std::size_t h2, std::uint64_t seed) {
  Rng rng(seed);
  return EncoderParams::init(d, h1, h2, rng);
}

Tensor run_target(const Graph& g, EncoderParams& params, const TargetEncodeOptions& options = {}) {
  Tape tape;
  return encode_target(tape, TargetOperators::build(g), bind(tape, params), options).value();
}

Tensor run_source(const DomainPair& pair, EncoderParams& params, const SpectralMixConfig& mix,
                  const FilterBank& filters = FilterBank::defaults()) {
  const SpectralBasis bs = eig_sym(normalized_laplacian(pair.source));
  const SpectralBasis bt = eig_sym(normalized_laplacian(pair.target));
  Tape tape;
  const SourceOperators ops = SourceOperators::build(pair, bs, bt, mix, filters);
  return encode_source(tape, ops, bind(tape, params)).value();
}

// sigma(U g U^T sigma(U g U^T X W1) W2) on one graph.
Tensor filtered_two_layer(const Graph& g, const EncoderParams& p, const FilterBank& f) {
  const SpectralBasis b = eig_sym(normalized_laplacian(g));
  Tensor scaled = b.vectors;
  for (std::size_t i = 0; i < scaled.rows(); ++i)
    for (std::size_t j = 0; j < scaled.cols(); ++j) scaled(i, j) *= f.response(b.values[j]);
  const Tensor filter = matmul_nt(scaled, b.vectors);
  const Tensor h = leaky_relu(matmul(matmul(filter, g.features()), p.w1.value));
  return leaky_relu(matmul(matmul(filter, h), p.w2.value));
}

}  // namespace

TEST(GcnLayer, Examples) {
  Rng rng(51);
  Tape tape;
  const Tensor z = random_tensor(4, 3, rng, 0.0, 1.0);
  const Var id = tape.constant(Tensor::identity(4));
  EXPECT_EQ(gcn_layer(id, tape.constant(z), tape.constant(Tensor::identity(3)), {}, 1).value(), z);
  EXPECT_EQ(gcn_layer(id, tape.constant(Tensor(4, 3)), tape.constant(random_tensor(3, 2, rng)), {}, 1)
                .value(),
            Tensor(4, 2));
  EXPECT_EQ(global_layer(id, tape.constant(z), tape.constant(Tensor::identity(3)), {}, 3).value(), z);
  EXPECT_THROW(gcn_layer(id, tape.constant(Tensor(3, 3)), tape.constant(Tensor(3, 2)), {}, 1),
               DimensionError);
  EXPECT_THROW(gcn_layer(id, tape.constant(Tensor(4, 3)), tape.constant(Tensor(2, 2)), {}, 1),
               DimensionError);
}

TEST(GcnLayer, K2RowsAgree) {
  Rng rng(52);
  const Graph k2 = sagda::testing::k2();
  Tape tape;
  const Var x = tape.constant(random_tensor(2, 3, rng));
  const Var w = tape.constant(random_tensor(3, 4, rng));
  const Tensor local = gcn_layer(tape.constant(renormalized_propagation(k2)), x, w, {}, 1).value();
  const Tensor global = global_layer(tape.constant(PpmiCache::build(k2).normalized), x, w, {}, 3).value();
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(local(0, c), local(1, c), 1e-15);
  // M-hat of K2 swaps the nodes, so the rows exchange rather than agree.
  const Tensor xw = leaky_relu(matmul(x.value(), w.value()));
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_NEAR(global(0, c), xw(1, c), 1e-15);
    EXPECT_NEAR(global(1, c), xw(0, c), 1e-15);
  }
}

TEST(GcnLayer, DropoutOnlyWhenPlanned) {
  Rng rng(53);
  Tape tape;
  const Var prop = tape.constant(Tensor::identity(30));
  const Var x = tape.constant(random_tensor(30, 10, rng, 0.5, 1.0));
  const Var w = tape.constant(Tensor::identity(10));
  const Tensor plain = gcn_layer(prop, x, w, {}, 1).value();
  const Tensor dropped = gcn_layer(prop, x, w, {0.3, 9}, 1).value();
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < dropped.size(); ++i) {
    if (dropped[i] == 0.0) {
      ++zeros;
    } else {
      EXPECT_NEAR(dropped[i], plain[i] / 0.7, 1e-15);
    }
  }
  EXPECT_GT(zeros, 0u);
  EXPECT_NE(gcn_layer(prop, x, w, {0.3, 9}, 1).value(), gcn_layer(prop, x, w, {0.3, 9}, 2).value());
}

TEST(Transition, Examples) {
  EXPECT_EQ(transition_matrix(sagda::testing::k2()), Tensor::from_rows({{0, 1}, {1, 0}}));
  const Tensor p3 = transition_matrix(sagda::testing::path_graph(3));
  EXPECT_EQ(p3(1, 0), 0.5);
  EXPECT_EQ(p3(1, 1), 0.0);
  EXPECT_EQ(p3(1, 2), 0.5);
}

TEST(Transition, RowSumsAreZeroOrOne) {
  Rng rng(54);
  for (int trial = 0; trial < 20; ++trial) {
    const Graph g = random_graph(3 + rng.below(20), 2, 2, rng, 0.15, true);
    const Tensor p = transition_matrix(g);
    const auto deg = degrees(g.adjacency());
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double s = 0.0;
      for (double v : p.row(i)) s += v;
      EXPECT_NEAR(s, deg[i] == 0.0 ? 0.0 : 1.0, 1e-12);
    }
  }
}

TEST(Ppmi, K2IsLn2OffDiagonal) {
  const Tensor m = ppmi_matrix(transition_matrix(sagda::testing::k2()));
  expect_near(m, Tensor::from_rows({{0, std::numbers::ln2}, {std::numbers::ln2, 0}}), 1e-15);
}

TEST(Ppmi, UniformTransitionIsIndependent) {
  expect_near(ppmi_matrix(Tensor(5, 5, 0.2)), Tensor(5, 5), 1e-12);
}

TEST(Ppmi, MatchesBruteForceOracle) {
  Rng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(9);
    Graph g = random_graph(n, 2, 2, rng, 0.4, trial % 2 == 1);
    if (sum(g.adjacency()) == 0.0) g = sagda::testing::path_graph(n);
    const Tensor p = transition_matrix(g);
    const Tensor m = ppmi_matrix(p);
    expect_near(m, ppmi_oracle(p), 1e-12);
    for (std::size_t i = 0; i < m.size(); ++i) {
      EXPECT_GE(m[i], 0.0);
      if (p[i] == 0.0) {
        EXPECT_EQ(m[i], 0.0);
      }
    }
  }
}

TEST(Ppmi, Errors) {
  EXPECT_THROW(ppmi_matrix(Tensor(3, 3)), ContractError);
  EXPECT_THROW(ppmi_matrix(Tensor::from_rows({{0, -1}, {1, 0}})), ContractError);
}

TEST(PpmiCache, EdgelessGraphHasZeroOperators) {
  const Graph g(Tensor(4, 4), Tensor(4, 2, 1.0), std::nullopt, 1);
  const PpmiCache c = PpmiCache::build(g);
  EXPECT_EQ(c.ppmi, Tensor(4, 4));
  EXPECT_EQ(c.normalized, Tensor(4, 4));
}

TEST(Attention, EqualInputsPassThrough) {
  Rng rng(56);
  EncoderParams p = make_params(4, 8, 5, 1);
  Tape tape;
  const Tensor z = random_tensor(6, 5, rng);
  const Tensor out = attention_fuse(tape.constant(z), tape.constant(z), bind(tape, p)).value();
  expect_near(out, z, 1e-15);
}

TEST(Attention, SymmetricScoresGiveMidpoint) {
  Rng rng(57);
  EncoderParams p = make_params(4, 8, 3, 2);
  const Tensor half = random_tensor(3, 1, rng);
  Tensor w(6, 1);
  for (std::size_t i = 0; i < 3; ++i) w(i, 0) = w(i + 3, 0) = half(i, 0);
  p.attention_local.value = w;
  p.attention_global.value = w;
  const Tensor zl = random_tensor(5, 3, rng);
  const Tensor zg = random_tensor(5, 3, rng);
  Tape tape;
  const Tensor out = attention_fuse(tape.constant(zl), tape.constant(zg), bind(tape, p)).value();
  expect_near(out, 0.5 * (zl + zg), 1e-15);
  expect_near(attention_weights(zl, zg, p), Tensor(5, 1, 0.5), 1e-15);
}

TEST(Attention, OutputsAreRowwiseConvexCombinations) {
  Rng rng(58);
  for (int trial = 0; trial < 10; ++trial) {
    EncoderParams p = make_params(3, 4, 6, 100 + static_cast<std::uint64_t>(trial));
    const Tensor zl = random_tensor(8, 6, rng, -2.0, 2.0);
    const Tensor zg = random_tensor(8, 6, rng, -2.0, 2.0);
    Tape tape;
    const Tensor out = attention_fuse(tape.constant(zl), tape.constant(zg), bind(tape, p)).value();
    for (std::size_t i = 0; i < 8; ++i) {
      // Least-squares t with out_i - z_g,i = t (z_l,i - z_g,i).
      double num = 0.0, den = 0.0;
      for (std::size_t c = 0; c < 6; ++c) {
        const double diff = zl(i, c) - zg(i, c);
        num += (out(i, c) - zg(i, c)) * diff;
        den += diff * diff;
      }
      const double t = num / den;
      EXPECT_GE(t, 0.0);
      EXPECT_LE(t, 1.0);
      for (std::size_t c = 0; c < 6; ++c)
        EXPECT_NEAR(out(i, c), t * zl(i, c) + (1 - t) * zg(i, c), 1e-10);
    }
  }
}

TEST(EncoderParams, ShapesAndGlorotRange) {
  EncoderParams p = make_params(16, 128, 16, 3);
  EXPECT_EQ(p.w1.value.shape_string(), "(16x128)");
  EXPECT_EQ(p.w2.value.shape_string(), "(128x16)");
  EXPECT_EQ(p.attention_proj.value.shape_string(), "(16x16)");
  EXPECT_EQ(p.attention_local.value.shape_string(), "(32x1)");
  EXPECT_EQ(p.output_dim(), 16u);
  EXPECT_LE(max_abs(p.w1.value), std::sqrt(6.0 / 144.0));
  EXPECT_EQ(make_params(16, 128, 16, 3).w1.value, p.w1.value);
}

TEST(EncodeTarget, ForcedLocalWeightEqualsLocalStack) {
  Rng rng(59);
  const Graph g = random_graph(12, 4, 2, rng, 0.3);
  EncoderParams p = make_params(4, 8, 5, 4);
  TargetEncodeOptions forced;
  forced.fusion.fixed_zeta = 1.0;
  TargetEncodeOptions local_only;
  local_only.use_global = false;
  const Tensor fused = run_target(g, p, forced);
  expect_near(fused, run_target(g, p, local_only), 1e-15);
  Tape tape;
  const Tensor stack =
      encode_local(tape, renormalized_propagation(g), g.features(), bind(tape, p), {}).value();
  expect_near(fused, stack, 1e-15);
}

TEST(EncodeTarget, ZeroFeaturesGiveZeroEmbedding) {
  Rng rng(60);
  const Graph g = random_graph(10, 4, 2, rng).with_features(Tensor(10, 4));
  EncoderParams p = make_params(4, 8, 5, 5);
  EXPECT_EQ(run_target(g, p), Tensor(10, 5));
}

TEST(EncodeTarget, OutputShape) {
  Rng rng(61);
  EncoderParams p = make_params(4, 128, 16, 6);
  EXPECT_EQ(run_target(random_graph(9, 4, 2, rng), p).shape_string(), "(9x16)");
}

TEST(EncodeTarget, W1GradientMatchesFiniteDifferences) {
  Rng rng(62);
  const Graph g = random_graph(8, 3, 2, rng, 0.4);
  EncoderParams p = make_params(3, 6, 4, 7);
  const TargetOperators ops = TargetOperators::build(g);
  const Tensor r = random_tensor(8, 4, rng);
  TargetEncodeOptions options;
  options.dropout = {0.3, 42};
  auto loss = [&](Tape& tape) {
    return sum(mul(encode_target(tape, ops, bind(tape, p), options), tape.constant(r)));
  };
  p.w1.zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  const Tensor analytic = p.w1.grad;
  auto f = [&] {
    Tape tape;
    return loss(tape).value().scalar();
  };
  EXPECT_LT(finite_difference_error(f, p.w1.value, analytic), 1e-4);
}

TEST(EncodeTarget, PermutationEquivariant) {
  Rng rng(63);
  for (int trial = 0; trial < 5; ++trial) {
    const Graph g = random_graph(10, 3, 2, rng, 0.35, true);
    const auto perm = random_permutation(10, rng);
    EncoderParams p = make_params(3, 8, 4, 8);
    expect_near(run_target(g.permuted(perm), p), permute_rows(run_target(g, p), perm), 1e-12);
  }
}

TEST(EncodeSource, AlphaOneIsFilteredSourceOnlyEncoder) {
  Rng rng(64);
  const DomainPair pair(random_graph(9, 3, 2, rng, 0.4), random_graph(7, 3, 2, rng, 0.4));
  EncoderParams p = make_params(3, 6, 4, 9);
  const Tensor z = run_source(pair, p, {1.0, 1.0, 0});
  EXPECT_EQ(z.shape_string(), "(9x4)");
  // With g == 1 and k < n_s the filter is the projector onto the k lowest modes,
  // so compare against the truncated operator rather than the identity.
  const SpectralBasis b = eig_sym(normalized_laplacian(pair.source));
  const Tensor uk = slice_cols(b.vectors, 0, 7);
  const Tensor proj = matmul_nt(uk, uk);
  const Tensor h = leaky_relu(matmul(matmul(proj, pair.source.features()), p.w1.value));
  expect_near(z, leaky_relu(matmul(matmul(proj, h), p.w2.value)), 1e-12);
}

TEST(EncodeSource, PermutedIdenticalDomainsCollapse) {
  Rng rng(65);
  for (int trial = 0; trial < 5; ++trial) {
    const Graph g = random_graph(8, 3, 2, rng, 0.5, true);
    const auto perm = random_permutation(8, rng);
    const DomainPair pair(g, g.permuted(perm));
    EncoderParams p = make_params(3, 6, 4, 10);
    FilterBank curved;
    curved.low.coefficients = {1.0, -0.4};
    curved.high.coefficients = {0.0, 0.3, 0.1};
    for (const FilterBank& f : {FilterBank::defaults(), curved}) {
      const Tensor z = run_source(pair, p, {0.6, 0.6, 0}, f);
      EXPECT_LT(max_abs_diff(z, filtered_two_layer(g, p, f)), 1e-9);
    }
  }
}

TEST(WeightSharing, W1ReceivesGradientFromEveryBranch) {
  Rng rng(66);
  const DomainPair pair(random_graph(8, 3, 2, rng, 0.4), random_graph(8, 3, 2, rng, 0.4));
  EncoderParams p = make_params(3, 6, 4, 11);
  const TargetOperators tops = TargetOperators::build(pair.target);
  const SourceOperators sops = SourceOperators::build(
      pair, eig_sym(normalized_laplacian(pair.source)), eig_sym(normalized_laplacian(pair.target)),
      {0.8, 0.8, 0}, FilterBank::defaults());

  auto w1_grad = [&](auto&& build) {
    p.w1.zero_grad();
    Tape tape;
    tape.backward(sum(build(tape, bind(tape, p))));
    return frobenius_norm(p.w1.grad);
  };
  TargetEncodeOptions local_only, global_only;
  local_only.fusion.fixed_zeta = 1.0;
  global_only.fusion.fixed_zeta = 0.0;
  EXPECT_GT(w1_grad([&](Tape& t, const BoundEncoder& b) { return encode_target(t, tops, b, local_only); }),
            0.0);
  EXPECT_GT(w1_grad([&](Tape& t, const BoundEncoder& b) { return encode_target(t, tops, b, global_only); }),
            0.0);
  EXPECT_GT(w1_grad([&](Tape& t, const BoundEncoder& b) { return encode_source(t, sops, b); }), 0.0);

  // Gradients from the three paths add up in the one shared parameter.
  auto grad_of = [&](auto&& build) {
    p.w1.zero_grad();
    Tape tape;
    tape.backward(sum(build(tape, bind(tape, p))));
    return p.w1.grad;
  };
  const Tensor gl = grad_of([&](Tape& t, const BoundEncoder& b) { return encode_target(t, tops, b, local_only); });
  const Tensor gg = grad_of([&](Tape& t, const BoundEncoder& b) { return encode_target(t, tops, b, global_only); });
  const Tensor gs = grad_of([&](Tape& t, const BoundEncoder& b) { return encode_source(t, sops, b); });
  const Tensor all = grad_of([&](Tape& t, const BoundEncoder& b) {
    return concat_rows(concat_rows(encode_target(t, tops, b, local_only),
                                   encode_target(t, tops, b, global_only)),
                       encode_source(t, sops, b));
  });
  expect_near(all, gl + gg + gs, 1e-12);
}
