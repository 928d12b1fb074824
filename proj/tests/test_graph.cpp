#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "sagda/error.hpp"
#include "sagda/graph.hpp"
#include "sagda/spectral.hpp"
#include "test_util.hpp"

using namespace sagda;
using sagda::testing::expect_near;
using sagda::testing::random_adjacency;
using sagda::testing::random_graph;
using sagda::testing::random_permutation;
using sagda::testing::random_tensor;

namespace {

Graph unlabeled(Tensor a) {
  const std::size_t n = a.rows();
  return Graph(std::move(a), Tensor(n, 2, 1.0), std::nullopt, 2);
}

}  // namespace

TEST(Graph, DegreeMatrixExamples) {
  EXPECT_EQ(degree_matrix(sagda::testing::k2()), Tensor::identity(2));
  EXPECT_EQ(degree_matrix(unlabeled(Tensor(3, 3))), Tensor(3, 3));
  const double p3[] = {1.0, 2.0, 1.0};
  EXPECT_EQ(degree_matrix(sagda::testing::path_graph(3)), Tensor::diagonal(p3));
}

TEST(Graph, LaplacianOfK2) {
  expect_near(normalized_laplacian(sagda::testing::k2()), Tensor::from_rows({{1, -1}, {-1, 1}}),
              1e-15);
}

TEST(Graph, LaplacianOfPath3) {
  const double r = 1.0 / std::sqrt(2.0);
  expect_near(normalized_laplacian(sagda::testing::path_graph(3)),
              Tensor::from_rows({{1, -r, 0}, {-r, 1, -r}, {0, -r, 1}}), 1e-15);
}

TEST(Graph, IsolatedNodesGetUnitDiagonal) {
  Tensor a(3, 3);
  a(0, 1) = a(1, 0) = 1.0;
  const Tensor l = normalized_laplacian(a);
  EXPECT_EQ(l(2, 2), 1.0);
  EXPECT_EQ(l(2, 0), 0.0);
  EXPECT_EQ(l(2, 1), 0.0);
  EXPECT_EQ(normalized_laplacian(Tensor(3, 3)), Tensor::identity(3));
}

TEST(Graph, LaplacianSpectrumInZeroTwo) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + rng.below(20);
    const Tensor l = normalized_laplacian(random_adjacency(n, 0.3, rng, trial % 2 == 1));
    Eigen::MatrixXd m(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) m(i, j) = l(i, j);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues();
    EXPECT_GE(ev.minCoeff(), -1e-10);
    EXPECT_LE(ev.maxCoeff(), 2.0 + 1e-10);
  }
}

TEST(Graph, LaplacianIsPermutationEquivariant) {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(15);
    const Tensor a = random_adjacency(n, 0.4, rng, true);
    const auto perm = random_permutation(n, rng);
    expect_near(normalized_laplacian(permute_symmetric(a, perm)),
                permute_symmetric(normalized_laplacian(a), perm), 1e-12);
  }
}

TEST(Graph, RenormalizedPropagationOfK2) {
  expect_near(renormalized_propagation(sagda::testing::k2()), Tensor(2, 2, 0.5), 1e-15);
}

TEST(Graph, SymmetricNormalizeKeepsZeroRows) {
  Tensor m = Tensor::from_rows({{0, 2, 0}, {2, 0, 0}, {0, 0, 0}});
  const Tensor n = symmetric_normalize(m);
  EXPECT_DOUBLE_EQ(n(0, 1), 1.0);
  EXPECT_EQ(n(2, 2), 0.0);
}

TEST(Graph, RejectsAsymmetricAdjacency) {
  Tensor a(3, 3);
  a(0, 1) = 1.0;
  EXPECT_THROW(unlabeled(a), ValidationError);
}

TEST(Graph, RejectsNegativeWeights) {
  Tensor a(3, 3);
  a(0, 1) = a(1, 0) = -1.0;
  EXPECT_THROW(unlabeled(a), ValidationError);
}

TEST(Graph, RejectsNonzeroDiagonal) {
  Tensor a(3, 3);
  a(1, 1) = 1.0;
  EXPECT_THROW(unlabeled(a), ValidationError);
}

TEST(Graph, RejectsLabelOutOfRange) {
  EXPECT_THROW(Graph(Tensor(2, 2), Tensor(2, 1), std::vector<int>{0, 2}, 2), ValidationError);
  EXPECT_THROW(Graph(Tensor(2, 2), Tensor(2, 1), std::vector<int>{0, -1}, 2), ValidationError);
}

TEST(Graph, RejectsShapeMismatches) {
  EXPECT_THROW(Graph(Tensor(2, 3), Tensor(2, 1), std::nullopt, 1), ValidationError);
  EXPECT_THROW(Graph(Tensor(2, 2), Tensor(3, 1), std::nullopt, 1), ValidationError);
  EXPECT_THROW(Graph(Tensor(2, 2), Tensor(2, 1), std::vector<int>{0}, 1), ValidationError);
}

TEST(Graph, DomainPairRequiresSharedSpaces) {
  Rng rng(23);
  EXPECT_THROW(DomainPair(random_graph(4, 3, 2, rng), random_graph(4, 2, 2, rng)), ValidationError);
  EXPECT_THROW(DomainPair(random_graph(4, 3, 2, rng), random_graph(4, 3, 3, rng)), ValidationError);
  EXPECT_THROW(DomainPair(random_graph(4, 3, 2, rng).without_labels(), random_graph(4, 3, 2, rng)),
               ValidationError);
  EXPECT_NO_THROW(DomainPair(random_graph(4, 3, 2, rng), random_graph(5, 3, 2, rng).without_labels()));
}

TEST(Graph, PermutedRelabelsEverything) {
  Rng rng(24);
  const Graph g = random_graph(6, 3, 3, rng, 0.5);
  const auto perm = random_permutation(6, rng);
  const Graph h = g.permuted(perm);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(h.labels()[i], g.labels()[perm[i]]);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(h.features()(i, c), g.features()(perm[i], c));
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(h.adjacency()(i, j), g.adjacency()(perm[i], perm[j]));
  }
}

TEST(Graph, UnlabeledGraphRefusesLabelAccess) {
  Rng rng(25);
  EXPECT_THROW(random_graph(3, 2, 2, rng).without_labels().labels(), ContractError);
}
