#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "sagda/autodiff.hpp"
#include "sagda/graph.hpp"
#include "sagda/rng.hpp"
#include "sagda/spectral.hpp"

namespace sagda {

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);

/// Encoder weights shared by the local, global, and spectral branches, plus
/// the attention parameters of the local/global fusion.
struct EncoderParams {
  Parameter w1;                // d x hidden1
  Parameter w2;                // hidden1 x hidden2
  Parameter attention_proj;    // hidden2 x hidden2
  Parameter attention_local;   // 2*hidden2 x 1
  Parameter attention_global;  // 2*hidden2 x 1

  static EncoderParams init(std::size_t input_dim, std::size_t hidden1, std::size_t hidden2,
                            Rng& rng);
  std::vector<Parameter*> all();
  std::size_t output_dim() const { return w2.value.cols(); }
};

struct BoundEncoder {
  Var w1, w2, attention_proj, attention_local, attention_global;
};
BoundEncoder bind(Tape& tape, EncoderParams& params);

/// Random-walk statistics of one graph for the global branch.
struct PpmiCache {
  Tensor transition;  // row-stochastic, zero rows for isolated nodes
  Tensor ppmi;        // nonnegative
  Tensor normalized;  // D^{-1/2} M D^{-1/2}

  static PpmiCache build(const Graph& g);
};

// P_ij = A_ij / sum_j A_ij; isolated-node rows are zero.
Tensor transition_matrix(const Graph& g);

// M_ij = max(log(m_ij / (m_i* m_*j)), 0) over the joint m = P / sum(P).
// Entries with P_ij == 0 map to 0. Throws ContractError when P is all zero.
Tensor ppmi_matrix(const Tensor& transition);

/// Dropout applied after each layer of the dual GNN when training.
struct DropoutPlan {
  double rate = 0.0;
  std::uint64_t seed = 0;  // per-epoch base seed; layers derive their own

  bool active() const { return rate > 0.0; }
};

// sigma(prop * Z_prev * W) followed by dropout. `layer` selects the dropout
// stream so that every layer of every branch draws an independent mask.
Var gcn_layer(Var prop, Var z_prev, Var weight, const DropoutPlan& dropout, std::uint64_t layer,
              double slope = 0.2);
Var global_layer(Var normalized_ppmi, Var z_prev, Var weight, const DropoutPlan& dropout,
                 std::uint64_t layer, double slope = 0.2);

struct FusionOptions {
  // Forces the local weight zeta for every node (test hook).
  std::optional<double> fixed_zeta;
};

// Per-node two-way attention: h_l = z_l W_a, h_g = z_g W_a,
// e_loc = LeakyReLU([h_l || h_g] w_loc), e_glob = LeakyReLU([h_g || h_l] w_glob),
// (zeta, 1 - zeta) = softmax(e_loc, e_glob), out = zeta z_l + (1 - zeta) z_g.
Var attention_fuse(Var z_local, Var z_global, const BoundEncoder& params,
                   const FusionOptions& options = {});
// Local weights zeta (n x 1) that attention_fuse would use.
Tensor attention_weights(const Tensor& z_local, const Tensor& z_global, const EncoderParams& params);

/// Fixed operators of the target-side dual encoder.
struct TargetOperators {
  Tensor propagation;  // renormalized adjacency with self-loops
  Tensor ppmi;         // normalized PPMI
  Tensor features;

  static TargetOperators build(const Graph& g);
  static TargetOperators build(const Graph& g, const PpmiCache& cache);
};

struct TargetEncodeOptions {
  DropoutPlan dropout;
  bool use_global = true;
  FusionOptions fusion;
};

// Two local GCN layers and two global PPMI layers with shared weights, fused
// once at the output. Returns Z_t (n_t x hidden2).
Var encode_target(Tape& tape, const TargetOperators& ops, const BoundEncoder& params,
                  const TargetEncodeOptions& options = {});

/// Fixed operators of the source-side spectral encoder.
struct SourceOperators {
  SpectralMixOperator source_mix;  // output on source nodes
  SpectralMixOperator target_mix;  // output on target nodes (layer-1 target stream)
  Tensor source_projected;         // U_s,k^T X_s
  Tensor target_projected;         // U_t,k^T X_t

  static SourceOperators build(const DomainPair& pair, const SpectralBasis& source_basis,
                               const SpectralBasis& target_basis, const SpectralMixConfig& config,
                               const FilterBank& filters);
};

// Two stacked spectral mixing layers with W1 then W2. Layer 1 is applied in
// both directions so layer 2 can mix the layer-1 outputs of each domain under
// the same rule. Returns Z_s (n_s x hidden2).
Var encode_source(Tape& tape, const SourceOperators& ops, const BoundEncoder& params);

// Source-only two-layer local GCN (baseline encoder), using only W1 and W2.
Var encode_local(Tape& tape, const Tensor& propagation, const Tensor& features,
                 const BoundEncoder& params, const DropoutPlan& dropout);

}  // namespace sagda
