#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sagda/autodiff.hpp"
#include "sagda/graph.hpp"
#include "sagda/tensor.hpp"

namespace sagda {

/// Eigenpairs of a symmetric matrix. Columns of `vectors` are orthonormal
/// eigenvectors ordered by ascending eigenvalue; each column is signed so that
/// its first entry of largest magnitude is nonnegative.
struct SpectralBasis {
  Tensor vectors;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

struct EigOptions {
  double tolerance = 1e-12;  // off-diagonal Frobenius norm, relative to max(1, ||L||_F)
  int max_sweeps = 100;
  double symmetry_tolerance = 1e-10;
};

// Cyclic Jacobi eigensolver. Deterministic: fixed sweep order and sign rule.
// Throws ContractError for asymmetric input and NumericError if the sweep cap
// is reached, reporting the remaining off-diagonal norm.
SpectralBasis eig_sym(const Tensor& matrix, const EigOptions& options = {});

// z = U^T x and its inverse x = U z.
Tensor gft(const SpectralBasis& basis, const Tensor& x);
Tensor inverse_gft(const SpectralBasis& basis, const Tensor& z);

/// Polynomial in lambda with coefficients in increasing degree.
struct Polynomial {
  std::vector<double> coefficients;

  double operator()(double x) const;
  Polynomial derivative() const;
};

/// Low-pass and high-pass responses whose sum is the overall filter g.
struct FilterBank {
  Polynomial low;
  Polynomial high;

  // g_L(l) = 1 - l/2, g_H(l) = l/2, so g == 1.
  static FilterBank defaults();

  // Throws ValidationError unless g_L is nonincreasing and g_H nondecreasing
  // on [0, 2] (checked on a 1001-point grid).
  void validate() const;
  double response(double lambda) const { return low(lambda) + high(lambda); }
  Polynomial combined() const;
};

struct SpectralMixConfig {
  double alpha = 0.8;  // weight of source high-frequency content
  double beta = 0.8;   // weight of source low-frequency content
  std::size_t k = 0;   // components mixed; 0 selects min(n_s, n_t)

  std::size_t resolved_k(std::size_t n_own, std::size_t n_other) const;
  void validate(std::size_t n_own, std::size_t n_other) const;
};

/// Precomputed operands of one cross-domain mixing layer, from the point of
/// view of the domain whose nodes receive the output ("own"). The layer is
///
///   sigma( U_own,k [ w_own * (U_own,k^T H_own W) + w_other * (U_other,k^T H_other W) ] )
///
/// where w_own = alpha g_H(lambda_own) + beta g_L(lambda_own) and
/// w_other = (1-alpha) g_H(lambda_other) + (1-beta) g_L(lambda_other), taken
/// over the k lowest eigenvalues of each domain (paired by ascending rank).
struct SpectralMixOperator {
  Tensor own_basis;       // n_own x k
  Tensor own_basis_t;     // k x n_own
  Tensor other_basis_t;   // k x n_other
  Tensor own_weight;      // k x 1
  Tensor other_weight;    // k x 1
};

SpectralMixOperator make_mix_operator(const SpectralBasis& own, const SpectralBasis& other,
                                      const SpectralMixConfig& config, const FilterBank& filters);

// Node-domain inputs H_own (n_own x d), H_other (n_other x d).
Var spectral_mix(const SpectralMixOperator& op, Var own_nodes, Var other_nodes, Var weight,
                 double slope = 0.2);
// Inputs already projected: U_own,k^T H_own and U_other,k^T H_other (k x d).
Var spectral_mix_projected(const SpectralMixOperator& op, Var own_coefficients,
                           Var other_coefficients, Var weight, double slope = 0.2);

// One augmented layer producing the source representation Z_s (n_s x d').
Tensor spectral_augment(const DomainPair& pair, const SpectralBasis& source_basis,
                        const SpectralBasis& target_basis, const Tensor& weight,
                        const SpectralMixConfig& config, const FilterBank& filters);

// Spectral magnitude profile of one class: the class-masked feature signals
// are transformed, pooled over feature channels by root-sum-square, and
// L2-normalized. Length n (one entry per eigenvalue rank).
Tensor category_signature(const Graph& g, const SpectralBasis& basis, int class_id);

// Piecewise-linear resampling of a profile over eigenvalue rank to `bins` points.
std::vector<double> resample_linear(std::span<const double> values, std::size_t bins);

double pearson(std::span<const double> a, std::span<const double> b);

// Entry (i, j): Pearson correlation of source class-i and target class-j
// signatures after resampling both to min(n_s, n_t) bins.
Tensor cross_domain_signature_correlation(const DomainPair& pair, const SpectralBasis& source_basis,
                                          const SpectralBasis& target_basis);
Tensor cross_domain_signature_correlation(const DomainPair& pair);

}  // namespace sagda
