#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "sagda/tensor.hpp"

namespace sagda {

/// Undirected weighted graph with dense adjacency, node features, and
/// optional node labels. Immutable after construction; the constructor
/// enforces every structural invariant and throws ValidationError otherwise.
class Graph {
 public:
  Graph(Tensor adjacency, Tensor features, std::optional<std::vector<int>> labels,
        int num_classes);

  std::size_t num_nodes() const { return adjacency_.rows(); }
  std::size_t feature_dim() const { return features_.cols(); }
  int num_classes() const { return num_classes_; }

  const Tensor& adjacency() const { return adjacency_; }
  const Tensor& features() const { return features_; }
  bool has_labels() const { return labels_.has_value(); }
  // Throws ContractError when the graph is unlabeled.
  std::span<const int> labels() const;
  const std::optional<std::vector<int>>& maybe_labels() const { return labels_; }

  Graph without_labels() const;
  Graph with_features(Tensor features) const;
  // Node i of the result is node perm[i] of this graph.
  Graph permuted(std::span<const std::size_t> perm) const;

 private:
  Tensor adjacency_;
  Tensor features_;
  std::optional<std::vector<int>> labels_;
  int num_classes_;
};

/// Labeled source graph and target graph over a shared feature space and
/// label space. Target labels, when present, are used only for evaluation.
struct DomainPair {
  Graph source;
  Graph target;

  DomainPair(Graph s, Graph t);
};

std::vector<double> degrees(const Tensor& adjacency);
Tensor degree_matrix(const Graph& g);

// I - D^{-1/2} A D^{-1/2}; isolated nodes get a zero D^{-1/2} entry, so L_ii = 1.
Tensor normalized_laplacian(const Tensor& adjacency);
Tensor normalized_laplacian(const Graph& g);

// D~^{-1/2} (I + A) D~^{-1/2} with D~ the row sums of I + A.
Tensor renormalized_propagation(const Graph& g);

// D^{-1/2} M D^{-1/2} for a symmetric nonnegative matrix; zero rows stay zero.
Tensor symmetric_normalize(const Tensor& m);

}  // namespace sagda
