#pragma once

#include <cstdint>
#include <vector>

#include "sagda/graph.hpp"
#include "sagda/spectral.hpp"

namespace sagda {

inline constexpr std::size_t kMaxExhaustiveNodes = 8;
// Absolute slack on `holds` so an exact match with roundoff-level lhs passes.
inline constexpr double kBoundRoundoff = 1e-12;

enum class PermutationSearch {
  Exhaustive,  // exact, n <= kMaxExhaustiveNodes
  Greedy,      // non-optimal heuristic for larger graphs
};

// Node i of the aligned target is node perm[i] of g_t, i.e. (P X_t)[i] = X_t[perm[i]].
using Permutation = std::vector<std::size_t>;

// ||X_s - P X_t||_F + ||A_s - P A_t P^T||_F.
double alignment_objective(const Graph& g_s, const Graph& g_t, const Permutation& perm);

// Exhaustive minimizer of alignment_objective; ties go to the lexicographically
// smallest permutation. Throws DimensionError for unequal sizes and
// CapacityError past kMaxExhaustiveNodes unless `search` is Greedy.
// The greedy search pairs nodes by smallest feature-plus-degree cost first.
Permutation optimal_permutation(const Graph& g_s, const Graph& g_t,
                                PermutationSearch search = PermutationSearch::Exhaustive);

// max |g'(lambda)| for g = g_L + g_H on 10^4 + 1 evenly spaced points of [0, 2].
double spectral_lipschitz(const FilterBank& filters);

struct VerifyConfig {
  double alpha = 0.8;  // beta is tied to alpha
  FilterBank filters = FilterBank::defaults();
  PermutationSearch search = PermutationSearch::Exhaustive;
};

struct BoundReport {
  // ||sigma(alpha a + (1-alpha) b) - sigma(b)||_F with a = g(L_s) X_s W and
  // b = P g(L_t) X_t W, the target term aligned by P.
  double lhs = 0.0;
  // Same difference before the nonlinearity: ||alpha (a - b)||_F.
  double linear_gap = 0.0;
  // Mixing layer as written on the source basis, U_s[alpha g(L_s) U_s^T X_s W +
  // (1-alpha) g(L_t) U_t^T X_t W], against sigma(b). Reported only.
  double lhs_literal = 0.0;
  double first_order_rhs = 0.0;
  double delta_L = 0.0;
  double delta_X = 0.0;
  double tau = 0.0;
  double c_lambda = 0.0;
  double g_max = 0.0;  // max |g| over the target spectrum
  bool holds = false;  // lhs <= first_order_rhs + kBoundRoundoff
  Permutation permutation;
};

// X_s and X_t are divided by max(||X_s||_op, ||X_t||_op) and W by ||W||_op
// before evaluation. Throws ContractError if a normalized operator norm
// still exceeds 1 (by more than 1e-9).
BoundReport verify_bound(const Graph& g_s, const Graph& g_t, const Tensor& weight,
                         const VerifyConfig& config = {});

struct SweepConfig {
  std::size_t trials = 100;
  std::size_t nodes = 6;
  std::size_t feature_dim = 4;
  std::size_t out_dim = 3;
  double epsilon = 1e-3;
  double edge_prob = 0.5;
  std::uint64_t seed = 0;
  VerifyConfig verify;
};

struct PerturbedInstance {
  Graph source;
  Graph target;
  Tensor weight;
};

// Random graph without isolated nodes, then A_t = A_s + eps |N| on every
// off-diagonal pair (symmetric) and X_t = X_s + eps N'.
PerturbedInstance perturbed_instance(const SweepConfig& config, std::uint64_t trial);

std::vector<BoundReport> perturbation_sweep(const SweepConfig& config);

}  // namespace sagda
