#include "sagda/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sagda/autodiff.hpp"
#include "sagda/error.hpp"
#include "sagda/rng.hpp"

namespace sagda {

namespace {

// g(L) X = U diag(g(lambda)) U^T X.
Tensor filter_apply(const SpectralBasis& basis, const Polynomial& g, const Tensor& x) {
  Tensor z = matmul_tn(basis.vectors, x);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const double w = g(basis.values[i]);
    for (double& v : z.row(i)) v *= w;
  }
  return matmul(basis.vectors, z);
}

Tensor divided(const Tensor& t, double s) { return s > 0.0 ? (1.0 / s) * t : t; }

Permutation greedy_permutation(const Graph& g_s, const Graph& g_t) {
  const std::size_t n = g_s.num_nodes();
  const auto ds = degrees(g_s.adjacency());
  const auto dt = degrees(g_t.adjacency());
  struct Candidate {
    double cost;
    std::size_t i, j;
  };
  std::vector<Candidate> all;
  all.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double c = (ds[i] - dt[j]) * (ds[i] - dt[j]);
      for (std::size_t k = 0; k < g_s.feature_dim(); ++k) {
        const double diff = g_s.features()(i, k) - g_t.features()(j, k);
        c += diff * diff;
      }
      all.push_back({c, i, j});
    }
  std::stable_sort(all.begin(), all.end(),
                   [](const Candidate& a, const Candidate& b) { return a.cost < b.cost; });
  Permutation perm(n, n);
  std::vector<bool> used(n, false);
  for (const Candidate& c : all) {
    if (perm[c.i] != n || used[c.j]) continue;
    perm[c.i] = c.j;
    used[c.j] = true;
  }
  return perm;
}

}  // namespace

double alignment_objective(const Graph& g_s, const Graph& g_t, const Permutation& perm) {
  const Tensor px = permute_rows(g_t.features(), perm);
  const Tensor pa = permute_symmetric(g_t.adjacency(), perm);
  return frobenius_norm(g_s.features() - px) + frobenius_norm(g_s.adjacency() - pa);
}

Permutation optimal_permutation(const Graph& g_s, const Graph& g_t, PermutationSearch search) {
  const std::size_t n = g_s.num_nodes();
  if (g_t.num_nodes() != n || g_t.feature_dim() != g_s.feature_dim()) {
    throw DimensionError("optimal_permutation: graphs differ in size or feature dimension");
  }
  if (search == PermutationSearch::Greedy) return greedy_permutation(g_s, g_t);
  if (n > kMaxExhaustiveNodes) {
    throw CapacityError("optimal_permutation: exhaustive search is limited to " +
                        std::to_string(kMaxExhaustiveNodes) + " nodes (got " + std::to_string(n) +
                        "); use the greedy search for larger graphs");
  }
  Permutation perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Permutation best = perm;
  double best_value = std::numeric_limits<double>::infinity();
  do {
    const double v = alignment_objective(g_s, g_t, perm);
    if (v < best_value) {
      best_value = v;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double spectral_lipschitz(const FilterBank& filters) {
  const Polynomial dg = filters.combined().derivative();
  constexpr int kSteps = 10000;
  double best = 0.0;
  for (int i = 0; i <= kSteps; ++i) {
    const double lambda = 2.0 * static_cast<double>(i) / kSteps;
    best = std::max(best, std::abs(dg(lambda)));
  }
  return best;
}

BoundReport verify_bound(const Graph& g_s, const Graph& g_t, const Tensor& weight,
                         const VerifyConfig& config) {
  const std::size_t n = g_s.num_nodes();
  if (g_t.num_nodes() != n) throw DimensionError("verify_bound: graphs must have equal size");
  if (g_s.feature_dim() != g_t.feature_dim() || weight.rows() != g_s.feature_dim()) {
    throw DimensionError("verify_bound: feature and weight dimensions disagree");
  }
  if (config.alpha < 0.0 || config.alpha > 1.0) throw ValidationError("verify_bound: alpha must lie in [0, 1]");

  const double x_scale = std::max(operator_norm(g_s.features()), operator_norm(g_t.features()));
  const Graph s = g_s.with_features(divided(g_s.features(), x_scale));
  const Graph t = g_t.with_features(divided(g_t.features(), x_scale));
  const Tensor w = divided(weight, operator_norm(weight));
  constexpr double kSlack = 1e-9;
  if (operator_norm(s.features()) > 1.0 + kSlack || operator_norm(t.features()) > 1.0 + kSlack ||
      operator_norm(w) > 1.0 + kSlack) {
    throw ContractError("verify_bound: operator norms exceed 1 after normalization");
  }

  BoundReport r;
  r.permutation = optimal_permutation(s, t, config.search);
  const Permutation& p = r.permutation;

  const Tensor l_s = normalized_laplacian(s);
  const Tensor l_t = normalized_laplacian(t);
  const SpectralBasis b_s = eig_sym(l_s);
  const SpectralBasis b_t = eig_sym(l_t);
  const Polynomial g = config.filters.combined();
  const double alpha = config.alpha;

  const Tensor xw_s = matmul(s.features(), w);
  const Tensor xw_t = matmul(t.features(), w);
  const Tensor a = filter_apply(b_s, g, xw_s);
  const Tensor b = permute_rows(filter_apply(b_t, g, xw_t), p);
  const Tensor mixed = alpha * a + (1.0 - alpha) * b;
  const Tensor reference = leaky_relu(b);
  r.lhs = frobenius_norm(leaky_relu(mixed) - reference);
  r.linear_gap = frobenius_norm(mixed - b);

  Tensor own = matmul_tn(b_s.vectors, xw_s);
  Tensor other = matmul_tn(b_t.vectors, xw_t);
  for (std::size_t i = 0; i < n; ++i) {
    const double wo = alpha * g(b_s.values[i]);
    const double wt = (1.0 - alpha) * g(b_t.values[i]);
    for (std::size_t j = 0; j < own.cols(); ++j) own(i, j) = wo * own(i, j) + wt * other(i, j);
  }
  r.lhs_literal = frobenius_norm(leaky_relu(matmul(b_s.vectors, own)) - reference);

  r.delta_L = frobenius_norm(l_s - permute_symmetric(l_t, p));
  r.delta_X = frobenius_norm(s.features() - permute_rows(t.features(), p));
  const double misalignment = frobenius_norm(b_s.vectors - permute_rows(b_t.vectors, p));
  r.tau = (misalignment + 1.0) * (misalignment + 1.0) - 1.0;
  r.c_lambda = spectral_lipschitz(config.filters);
  for (double lambda : b_t.values) r.g_max = std::max(r.g_max, std::abs(g(lambda)));
  r.first_order_rhs = alpha * (r.c_lambda * (1.0 + r.tau) * r.delta_L + r.g_max * r.delta_X);
  r.holds = r.lhs <= r.first_order_rhs + kBoundRoundoff;
  return r;
}

PerturbedInstance perturbed_instance(const SweepConfig& config, std::uint64_t trial) {
  if (config.nodes < 2) throw ValidationError("sweep: nodes must be >= 2");
  Rng rng(derive_seed(config.seed, trial));
  const std::size_t n = config.nodes;
  Tensor a(n, n);
  bool connected_rows = false;
  while (!connected_rows) {
    a.fill(0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng.bernoulli(config.edge_prob)) a(i, j) = a(j, i) = 1.0;
    connected_rows = true;
    for (double d : degrees(a)) connected_rows = connected_rows && d > 0.0;
  }
  Tensor x(n, config.feature_dim);
  for (double& v : x.data()) v = rng.normal();
  Tensor w(config.feature_dim, config.out_dim);
  for (double& v : w.data()) v = rng.normal();

  Tensor at = a;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double bump = config.epsilon * std::abs(rng.normal());
      at(i, j) += bump;
      at(j, i) += bump;
    }
  Tensor xt = x;
  for (double& v : xt.data()) v += config.epsilon * rng.normal();

  return {Graph(std::move(a), std::move(x), std::nullopt, 1),
          Graph(std::move(at), std::move(xt), std::nullopt, 1), std::move(w)};
}

std::vector<BoundReport> perturbation_sweep(const SweepConfig& config) {
  std::vector<BoundReport> out;
  out.reserve(config.trials);
  for (std::size_t trial = 0; trial < config.trials; ++trial) {
    const PerturbedInstance inst = perturbed_instance(config, trial);
    out.push_back(verify_bound(inst.source, inst.target, inst.weight, config.verify));
  }
  return out;
}

}  // namespace sagda
