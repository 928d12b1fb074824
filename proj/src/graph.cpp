#include "sagda/graph.hpp"

#include <cmath>
#include <string>

#include "sagda/error.hpp"

namespace sagda {

Graph::Graph(Tensor adjacency, Tensor features, std::optional<std::vector<int>> labels,
             int num_classes)
    : adjacency_(std::move(adjacency)),
      features_(std::move(features)),
      labels_(std::move(labels)),
      num_classes_(num_classes) {
  const std::size_t n = adjacency_.rows();
  if (adjacency_.cols() != n) {
    throw ValidationError("graph: adjacency must be square, got " + adjacency_.shape_string());
  }
  if (features_.rows() != n) {
    throw ValidationError("graph: feature rows " + std::to_string(features_.rows()) +
                          " != node count " + std::to_string(n));
  }
  if (!adjacency_.all_finite() || !features_.all_finite()) {
    throw ValidationError("graph: non-finite adjacency or feature entry");
  }
  if (num_classes_ < 1) throw ValidationError("graph: num_classes must be >= 1");
  for (std::size_t i = 0; i < n; ++i) {
    if (adjacency_(i, i) != 0.0) {
      throw ValidationError("graph: nonzero diagonal at node " + std::to_string(i));
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      const double a = adjacency_(i, j);
      if (a != adjacency_(j, i)) {
        throw ValidationError("graph: asymmetric adjacency at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
      }
      if (a < 0.0) {
        throw ValidationError("graph: negative edge weight at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
      }
    }
  }
  if (labels_) {
    if (labels_->size() != n) {
      throw ValidationError("graph: " + std::to_string(labels_->size()) + " labels for " +
                            std::to_string(n) + " nodes");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int y = (*labels_)[i];
      if (y < 0 || y >= num_classes_) {
        throw ValidationError("graph: label " + std::to_string(y) + " at node " +
                              std::to_string(i) + " outside [0, " + std::to_string(num_classes_) +
                              ")");
      }
    }
  }
}

std::span<const int> Graph::labels() const {
  if (!labels_) throw ContractError("graph is unlabeled");
  return *labels_;
}

Graph Graph::without_labels() const { return Graph(adjacency_, features_, std::nullopt, num_classes_); }

Graph Graph::with_features(Tensor features) const {
  return Graph(adjacency_, std::move(features), labels_, num_classes_);
}

Graph Graph::permuted(std::span<const std::size_t> perm) const {
  std::optional<std::vector<int>> labels;
  if (labels_) {
    labels.emplace(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) (*labels)[i] = (*labels_)[perm[i]];
  }
  return Graph(permute_symmetric(adjacency_, perm), permute_rows(features_, perm),
               std::move(labels), num_classes_);
}

DomainPair::DomainPair(Graph s, Graph t) : source(std::move(s)), target(std::move(t)) {
  if (source.feature_dim() != target.feature_dim()) {
    throw ValidationError("domain pair: feature dims differ (" +
                          std::to_string(source.feature_dim()) + " vs " +
                          std::to_string(target.feature_dim()) + ")");
  }
  if (source.num_classes() != target.num_classes()) {
    throw ValidationError("domain pair: class counts differ");
  }
  if (!source.has_labels()) throw ValidationError("domain pair: source graph must be labeled");
}

std::vector<double> degrees(const Tensor& adjacency) {
  std::vector<double> d(adjacency.rows(), 0.0);
  for (std::size_t i = 0; i < adjacency.rows(); ++i)
    for (double a : adjacency.row(i)) d[i] += a;
  return d;
}

Tensor degree_matrix(const Graph& g) { return Tensor::diagonal(degrees(g.adjacency())); }

Tensor symmetric_normalize(const Tensor& m) {
  const std::vector<double> d = degrees(m);
  std::vector<double> s(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) s[i] = d[i] > 0.0 ? 1.0 / std::sqrt(d[i]) : 0.0;
  Tensor out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = (s[i] * s[j]) * m(i, j);
  return out;
}

Tensor normalized_laplacian(const Tensor& adjacency) {
  Tensor l = symmetric_normalize(adjacency);
  for (double& v : l.data()) v = -v;
  for (std::size_t i = 0; i < l.rows(); ++i) l(i, i) += 1.0;
  return l;
}

Tensor normalized_laplacian(const Graph& g) { return normalized_laplacian(g.adjacency()); }

Tensor renormalized_propagation(const Graph& g) {
  Tensor a = g.adjacency();
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += 1.0;
  return symmetric_normalize(a);
}

}  // namespace sagda
