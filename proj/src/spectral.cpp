#include "sagda/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sagda/error.hpp"

namespace sagda {

namespace {

double off_diagonal_norm(const Tensor& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) acc += a(i, j) * a(i, j);
  return std::sqrt(acc);
}

void rotate(Tensor& a, Tensor& v, std::size_t p, std::size_t q) {
  const double apq = a(p, q);
  if (apq == 0.0) return;
  const double app = a(p, p);
  const double aqq = a(q, q);
  const double theta = (aqq - app) / (2.0 * apq);
  double t;
  if (std::abs(theta) > 1e150) {
    t = 0.5 / theta;
  } else {
    t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
  }
  const double c = 1.0 / std::sqrt(t * t + 1.0);
  const double s = t * c;
  const std::size_t n = a.rows();
  for (std::size_t r = 0; r < n; ++r) {
    if (r == p || r == q) continue;
    const double arp = a(r, p);
    const double arq = a(r, q);
    const double np = c * arp - s * arq;
    const double nq = s * arp + c * arq;
    a(r, p) = np;
    a(p, r) = np;
    a(r, q) = nq;
    a(q, r) = nq;
  }
  a(p, p) = app - t * apq;
  a(q, q) = aqq + t * apq;
  a(p, q) = 0.0;
  a(q, p) = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double vrp = v(r, p);
    const double vrq = v(r, q);
    v(r, p) = c * vrp - s * vrq;
    v(r, q) = s * vrp + c * vrq;
  }
}

}  // namespace

SpectralBasis eig_sym(const Tensor& matrix, const EigOptions& options) {
  const std::size_t n = matrix.rows();
  if (matrix.cols() != n) throw DimensionError("eig_sym: matrix is " + matrix.shape_string());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(matrix(i, j) - matrix(j, i)) > options.symmetry_tolerance) {
        throw ContractError("eig_sym: input not symmetric at (" + std::to_string(i) + ", " +
                            std::to_string(j) + ")");
      }
  require_finite(matrix, "eig_sym");

  Tensor a = matrix;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double m = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = m;
      a(j, i) = m;
    }
  Tensor v = Tensor::identity(n);
  const double threshold = options.tolerance * std::max(1.0, frobenius_norm(a));

  double off = off_diagonal_norm(a);
  int sweep = 0;
  while (off > threshold) {
    if (sweep == options.max_sweeps) {
      std::ostringstream os;
      os << "eig_sym: no convergence after " << sweep << " sweeps, off-diagonal residual " << off;
      throw NumericError(os.str());
    }
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) rotate(a, v, p, q);
    off = off_diagonal_norm(a);
    ++sweep;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&a](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

  SpectralBasis basis;
  basis.values.resize(n);
  basis.vectors = Tensor(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t src = order[c];
    basis.values[c] = a(src, src);
    std::size_t lead = 0;
    double best = -1.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (std::abs(v(r, src)) > best) {
        best = std::abs(v(r, src));
        lead = r;
      }
    }
    const double sign = v(lead, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r) basis.vectors(r, c) = sign * v(r, src);
  }
  return basis;
}

Tensor gft(const SpectralBasis& basis, const Tensor& x) {
  if (x.rows() != basis.size()) {
    throw DimensionError("gft: signal " + x.shape_string() + " for basis of size " +
                         std::to_string(basis.size()));
  }
  return matmul_tn(basis.vectors, x);
}

Tensor inverse_gft(const SpectralBasis& basis, const Tensor& z) {
  if (z.rows() != basis.size()) {
    throw DimensionError("inverse_gft: coefficients " + z.shape_string() + " for basis of size " +
                         std::to_string(basis.size()));
  }
  return matmul(basis.vectors, z);
}

double Polynomial::operator()(double x) const {
  double acc = 0.0;
  for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) acc = acc * x + *it;
  return acc;
}

Polynomial Polynomial::derivative() const {
  Polynomial d;
  for (std::size_t i = 1; i < coefficients.size(); ++i)
    d.coefficients.push_back(static_cast<double>(i) * coefficients[i]);
  return d;
}

FilterBank FilterBank::defaults() { return {Polynomial{{1.0, -0.5}}, Polynomial{{0.0, 0.5}}}; }

Polynomial FilterBank::combined() const {
  Polynomial g;
  g.coefficients.assign(std::max(low.coefficients.size(), high.coefficients.size()), 0.0);
  for (std::size_t i = 0; i < low.coefficients.size(); ++i) g.coefficients[i] += low.coefficients[i];
  for (std::size_t i = 0; i < high.coefficients.size(); ++i)
    g.coefficients[i] += high.coefficients[i];
  return g;
}

void FilterBank::validate() const {
  const Polynomial dl = low.derivative();
  const Polynomial dh = high.derivative();
  constexpr int kSteps = 1000;
  for (int i = 0; i <= kSteps; ++i) {
    const double lambda = 2.0 * i / kSteps;
    if (dl(lambda) > 1e-12) {
      throw ValidationError("filters: g_L must be nonincreasing on [0, 2] (slope " +
                            std::to_string(dl(lambda)) + " at " + std::to_string(lambda) + ")");
    }
    if (dh(lambda) < -1e-12) {
      throw ValidationError("filters: g_H must be nondecreasing on [0, 2] (slope " +
                            std::to_string(dh(lambda)) + " at " + std::to_string(lambda) + ")");
    }
  }
}

std::size_t SpectralMixConfig::resolved_k(std::size_t n_own, std::size_t n_other) const {
  return k == 0 ? std::min(n_own, n_other) : k;
}

void SpectralMixConfig::validate(std::size_t n_own, std::size_t n_other) const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("beta must lie in [0, 1]");
  const std::size_t kk = resolved_k(n_own, n_other);
  if (kk < 1 || kk > std::min(n_own, n_other)) {
    throw ContractError("spectral mixing: k=" + std::to_string(kk) + " outside [1, " +
                        std::to_string(std::min(n_own, n_other)) + "]");
  }
}

SpectralMixOperator make_mix_operator(const SpectralBasis& own, const SpectralBasis& other,
                                      const SpectralMixConfig& config, const FilterBank& filters) {
  config.validate(own.size(), other.size());
  const std::size_t k = config.resolved_k(own.size(), other.size());
  SpectralMixOperator op;
  op.own_basis = slice_cols(own.vectors, 0, k);
  op.own_basis_t = transpose(op.own_basis);
  op.other_basis_t = transpose(slice_cols(other.vectors, 0, k));
  op.own_weight = Tensor(k, 1);
  op.other_weight = Tensor(k, 1);
  for (std::size_t i = 0; i < k; ++i) {
    const double lo = own.values[i];
    const double lt = other.values[i];
    op.own_weight[i] = config.alpha * filters.high(lo) + config.beta * filters.low(lo);
    op.other_weight[i] =
        (1.0 - config.alpha) * filters.high(lt) + (1.0 - config.beta) * filters.low(lt);
  }
  return op;
}

Var spectral_mix_projected(const SpectralMixOperator& op, Var own_coefficients,
                           Var other_coefficients, Var weight, double slope) {
  Tape& tape = *weight.tape();
  const std::size_t k = op.own_weight.rows();
  if (own_coefficients.rows() != k || other_coefficients.rows() != k) {
    throw DimensionError("spectral_mix: coefficient rows must equal k=" + std::to_string(k));
  }
  Var own = scale_rows(matmul(own_coefficients, weight), tape.constant(op.own_weight));
  Var other = scale_rows(matmul(other_coefficients, weight), tape.constant(op.other_weight));
  Var mixed = add(own, other);
  return leaky_relu(matmul(tape.constant(op.own_basis), mixed), slope);
}

Var spectral_mix(const SpectralMixOperator& op, Var own_nodes, Var other_nodes, Var weight,
                 double slope) {
  Tape& tape = *weight.tape();
  if (own_nodes.rows() != op.own_basis_t.cols() || other_nodes.rows() != op.other_basis_t.cols()) {
    throw DimensionError("spectral_mix: node counts do not match the mixing operator");
  }
  if (own_nodes.cols() != other_nodes.cols()) {
    throw DimensionError("spectral_mix: feature dims differ between domains");
  }
  // Multiply by W before projecting: the projection then runs on the narrower side.
  Var own = matmul(tape.constant(op.own_basis_t), matmul(own_nodes, weight));
  Var other = matmul(tape.constant(op.other_basis_t), matmul(other_nodes, weight));
  Var mixed = add(scale_rows(own, tape.constant(op.own_weight)),
                  scale_rows(other, tape.constant(op.other_weight)));
  return leaky_relu(matmul(tape.constant(op.own_basis), mixed), slope);
}

Tensor spectral_augment(const DomainPair& pair, const SpectralBasis& source_basis,
                        const SpectralBasis& target_basis, const Tensor& weight,
                        const SpectralMixConfig& config, const FilterBank& filters) {
  if (source_basis.size() != pair.source.num_nodes() ||
      target_basis.size() != pair.target.num_nodes()) {
    throw DimensionError("spectral_augment: basis sizes do not match the graphs");
  }
  if (weight.rows() != pair.source.feature_dim()) {
    throw DimensionError("spectral_augment: weight " + weight.shape_string() +
                         " does not match feature dim " +
                         std::to_string(pair.source.feature_dim()));
  }
  const SpectralMixOperator op = make_mix_operator(source_basis, target_basis, config, filters);
  Tape tape;
  Var z = spectral_mix(op, tape.constant(pair.source.features()),
                       tape.constant(pair.target.features()), tape.constant(weight));
  return z.value();
}

Tensor category_signature(const Graph& g, const SpectralBasis& basis, int class_id) {
  const auto labels = g.labels();
  if (basis.size() != g.num_nodes()) throw DimensionError("category_signature: basis size mismatch");
  Tensor masked(g.num_nodes(), g.feature_dim());
  std::size_t members = 0;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    if (labels[i] != class_id) continue;
    ++members;
    std::copy(g.features().row(i).begin(), g.features().row(i).end(), masked.row(i).begin());
  }
  if (members == 0) {
    throw ContractError("category_signature: class " + std::to_string(class_id) + " is empty");
  }
  const Tensor coefficients = gft(basis, masked);
  Tensor signature(g.num_nodes(), 1);
  for (std::size_t j = 0; j < coefficients.rows(); ++j) {
    double acc = 0.0;
    for (double c : coefficients.row(j)) acc += c * c;
    signature[j] = std::sqrt(acc);
  }
  const double norm = frobenius_norm(signature);
  if (norm == 0.0) {
    throw ContractError("category_signature: class " + std::to_string(class_id) +
                        " has an all-zero feature signal");
  }
  for (double& s : signature.data()) s /= norm;
  return signature;
}

std::vector<double> resample_linear(std::span<const double> values, std::size_t bins) {
  if (values.empty() || bins == 0) throw ContractError("resample_linear: empty input or output");
  std::vector<double> out(bins);
  if (bins == 1 || values.size() == 1) {
    std::fill(out.begin(), out.end(), values[0]);
    return out;
  }
  const double step = static_cast<double>(values.size() - 1) / static_cast<double>(bins - 1);
  for (std::size_t j = 0; j < bins; ++j) {
    const double pos = static_cast<double>(j) * step;
    const auto lo = std::min(static_cast<std::size_t>(pos), values.size() - 2);
    const double frac = pos - static_cast<double>(lo);
    out[j] = values[lo] + frac * (values[lo + 1] - values[lo]);
  }
  return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw DimensionError("pearson: length mismatch");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  // A constant profile carries no shape information; report no correlation.
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

Tensor cross_domain_signature_correlation(const DomainPair& pair, const SpectralBasis& source_basis,
                                          const SpectralBasis& target_basis) {
  if (!pair.target.has_labels()) {
    throw ContractError("signature correlation needs target labels (analysis mode)");
  }
  const int classes = pair.source.num_classes();
  const std::size_t bins = std::min(pair.source.num_nodes(), pair.target.num_nodes());
  std::vector<std::vector<double>> src(static_cast<std::size_t>(classes));
  std::vector<std::vector<double>> tgt(static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) {
    src[static_cast<std::size_t>(c)] =
        resample_linear(category_signature(pair.source, source_basis, c).data(), bins);
    tgt[static_cast<std::size_t>(c)] =
        resample_linear(category_signature(pair.target, target_basis, c).data(), bins);
  }
  Tensor out(static_cast<std::size_t>(classes), static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = pearson(src[i], tgt[j]);
  return out;
}

Tensor cross_domain_signature_correlation(const DomainPair& pair) {
  return cross_domain_signature_correlation(pair, eig_sym(normalized_laplacian(pair.source)),
                                            eig_sym(normalized_laplacian(pair.target)));
}

}  // namespace sagda
