#include "sagda/dual_gnn.hpp"

#include <cmath>

#include "sagda/error.hpp"

namespace sagda {

namespace {

// Layer ids for dropout streams.
constexpr std::uint64_t kLocal1 = 1;
constexpr std::uint64_t kLocal2 = 2;
constexpr std::uint64_t kGlobal1 = 3;
constexpr std::uint64_t kGlobal2 = 4;

Var propagate(Var prop, Var z_prev, Var weight, double slope) {
  if (prop.rows() != prop.cols() || prop.cols() != z_prev.rows()) {
    throw DimensionError("graph layer: propagation " + prop.value().shape_string() +
                         " does not match input " + z_prev.value().shape_string());
  }
  if (z_prev.cols() != weight.rows()) {
    throw DimensionError("graph layer: input " + z_prev.value().shape_string() +
                         " does not match weight " + weight.value().shape_string());
  }
  // Same product either way; pick the cheaper association.
  Var pre = z_prev.cols() <= weight.cols() ? matmul(matmul(prop, z_prev), weight)
                                           : matmul(prop, matmul(z_prev, weight));
  return leaky_relu(pre, slope);
}

Var maybe_dropout(Var x, const DropoutPlan& plan, std::uint64_t layer) {
  if (!plan.active()) return x;
  return dropout(x, plan.rate, derive_seed(plan.seed, layer));
}

}  // namespace

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t(rows, cols);
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

EncoderParams EncoderParams::init(std::size_t input_dim, std::size_t hidden1, std::size_t hidden2,
                                  Rng& rng) {
  EncoderParams p;
  p.w1 = Parameter("w1", glorot_uniform(input_dim, hidden1, rng));
  p.w2 = Parameter("w2", glorot_uniform(hidden1, hidden2, rng));
  p.attention_proj = Parameter("attention_proj", glorot_uniform(hidden2, hidden2, rng));
  p.attention_local = Parameter("attention_local", glorot_uniform(2 * hidden2, 1, rng));
  p.attention_global = Parameter("attention_global", glorot_uniform(2 * hidden2, 1, rng));
  return p;
}

std::vector<Parameter*> EncoderParams::all() {
  return {&w1, &w2, &attention_proj, &attention_local, &attention_global};
}

BoundEncoder bind(Tape& tape, EncoderParams& params) {
  return {tape.param(params.w1), tape.param(params.w2), tape.param(params.attention_proj),
          tape.param(params.attention_local), tape.param(params.attention_global)};
}

Tensor transition_matrix(const Graph& g) {
  const Tensor& a = g.adjacency();
  const std::vector<double> d = degrees(a);
  Tensor p(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    if (d[i] == 0.0) continue;
    for (std::size_t j = 0; j < a.cols(); ++j) p(i, j) = a(i, j) / d[i];
  }
  return p;
}

Tensor ppmi_matrix(const Tensor& transition) {
  const std::size_t n = transition.rows();
  if (transition.cols() != n) throw DimensionError("ppmi_matrix: transition must be square");
  double total = 0.0;
  std::vector<double> row(n, 0.0), col(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double v = transition(i, j);
      if (v < 0.0) throw ContractError("ppmi_matrix: negative transition entry");
      total += v;
      row[i] += v;
      col[j] += v;
    }
  if (total == 0.0) throw ContractError("ppmi_matrix: transition matrix is all zero");

  Tensor m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double v = transition(i, j);
      if (v == 0.0) continue;
      // m_ij / (m_i* m_*j) with every factor normalized by the total.
      const double ratio = (v / total) / ((row[i] / total) * (col[j] / total));
      m(i, j) = std::max(std::log(ratio), 0.0);
    }
  return m;
}

PpmiCache PpmiCache::build(const Graph& g) {
  PpmiCache cache;
  cache.transition = transition_matrix(g);
  bool any_edge = false;
  for (double v : cache.transition.data()) any_edge = any_edge || v != 0.0;
  cache.ppmi = any_edge ? ppmi_matrix(cache.transition) : Tensor(g.num_nodes(), g.num_nodes());
  cache.normalized = symmetric_normalize(cache.ppmi);
  return cache;
}

Var gcn_layer(Var prop, Var z_prev, Var weight, const DropoutPlan& dropout, std::uint64_t layer,
              double slope) {
  return maybe_dropout(propagate(prop, z_prev, weight, slope), dropout, layer);
}

Var global_layer(Var normalized_ppmi, Var z_prev, Var weight, const DropoutPlan& dropout,
                 std::uint64_t layer, double slope) {
  return maybe_dropout(propagate(normalized_ppmi, z_prev, weight, slope), dropout, layer);
}

Var attention_fuse(Var z_local, Var z_global, const BoundEncoder& params,
                   const FusionOptions& options) {
  if (!z_local.value().same_shape(z_global.value())) {
    throw DimensionError("attention_fuse: local " + z_local.value().shape_string() +
                         " vs global " + z_global.value().shape_string());
  }
  Tape& tape = *z_local.tape();
  const std::size_t n = z_local.rows();
  Var zeta;
  Var one_minus_zeta;
  if (options.fixed_zeta) {
    zeta = tape.constant(Tensor(n, 1, *options.fixed_zeta));
    one_minus_zeta = tape.constant(Tensor(n, 1, 1.0 - *options.fixed_zeta));
  } else {
    Var h_local = matmul(z_local, params.attention_proj);
    Var h_global = matmul(z_global, params.attention_proj);
    Var e_local = leaky_relu(matmul(concat_cols(h_local, h_global), params.attention_local));
    Var e_global = leaky_relu(matmul(concat_cols(h_global, h_local), params.attention_global));
    Var weights = rowwise_softmax(concat_cols(e_local, e_global));
    zeta = slice_cols(weights, 0, 1);
    one_minus_zeta = slice_cols(weights, 1, 2);
  }
  return add(scale_rows(z_local, zeta), scale_rows(z_global, one_minus_zeta));
}

Tensor attention_weights(const Tensor& z_local, const Tensor& z_global,
                         const EncoderParams& params) {
  Tape tape;
  Var h_local = matmul(tape.constant(z_local), tape.constant(params.attention_proj.value));
  Var h_global = matmul(tape.constant(z_global), tape.constant(params.attention_proj.value));
  Var e_local = leaky_relu(
      matmul(concat_cols(h_local, h_global), tape.constant(params.attention_local.value)));
  Var e_global = leaky_relu(
      matmul(concat_cols(h_global, h_local), tape.constant(params.attention_global.value)));
  return slice_cols(rowwise_softmax(concat_cols(e_local, e_global)).value(), 0, 1);
}

TargetOperators TargetOperators::build(const Graph& g) { return build(g, PpmiCache::build(g)); }

TargetOperators TargetOperators::build(const Graph& g, const PpmiCache& cache) {
  return {renormalized_propagation(g), cache.normalized, g.features()};
}

Var encode_target(Tape& tape, const TargetOperators& ops, const BoundEncoder& params,
                  const TargetEncodeOptions& options) {
  Var x = tape.constant(ops.features);
  Var prop = tape.constant(ops.propagation);
  Var local = gcn_layer(prop, x, params.w1, options.dropout, kLocal1);
  local = gcn_layer(prop, local, params.w2, options.dropout, kLocal2);
  if (!options.use_global) return local;

  Var ppmi = tape.constant(ops.ppmi);
  Var global = global_layer(ppmi, x, params.w1, options.dropout, kGlobal1);
  global = global_layer(ppmi, global, params.w2, options.dropout, kGlobal2);
  return attention_fuse(local, global, params, options.fusion);
}

SourceOperators SourceOperators::build(const DomainPair& pair, const SpectralBasis& source_basis,
                                       const SpectralBasis& target_basis,
                                       const SpectralMixConfig& config,
                                       const FilterBank& filters) {
  SourceOperators ops;
  ops.source_mix = make_mix_operator(source_basis, target_basis, config, filters);
  ops.target_mix = make_mix_operator(target_basis, source_basis, config, filters);
  ops.source_projected = matmul(ops.source_mix.own_basis_t, pair.source.features());
  ops.target_projected = matmul(ops.target_mix.own_basis_t, pair.target.features());
  return ops;
}

Var encode_source(Tape& tape, const SourceOperators& ops, const BoundEncoder& params) {
  Var ps = tape.constant(ops.source_projected);
  Var pt = tape.constant(ops.target_projected);
  Var hs = spectral_mix_projected(ops.source_mix, ps, pt, params.w1);
  Var ht = spectral_mix_projected(ops.target_mix, pt, ps, params.w1);
  return spectral_mix(ops.source_mix, hs, ht, params.w2);
}

Var encode_local(Tape& tape, const Tensor& propagation, const Tensor& features,
                 const BoundEncoder& params, const DropoutPlan& dropout) {
  Var prop = tape.constant(propagation);
  Var h = gcn_layer(prop, tape.constant(features), params.w1, dropout, kLocal1);
  return gcn_layer(prop, h, params.w2, dropout, kLocal2);
}

}  // namespace sagda
