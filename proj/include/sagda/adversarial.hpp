#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sagda/autodiff.hpp"
#include "sagda/rng.hpp"

namespace sagda {

// Floor applied inside the logs of the domain loss.
inline constexpr double kDomainLogFloor = 1e-12;

/// Label classifier theta_y and domain classifier theta_d over embeddings.
struct Heads {
  Parameter label_weight;   // h x C
  Parameter label_bias;     // 1 x C
  Parameter domain_weight;  // h x 1
  Parameter domain_bias;    // 1 x 1

  static Heads init(std::size_t embedding_dim, std::size_t num_classes, Rng& rng);
  std::vector<Parameter*> all();
  std::size_t num_classes() const { return label_weight.value.cols(); }
};

struct BoundHeads {
  Var label_weight, label_bias, domain_weight, domain_bias;
};
BoundHeads bind(Tape& tape, Heads& heads);

Var label_logits(Var embeddings, const BoundHeads& heads);
// Probability that each row belongs to the target domain, n x 1.
Var domain_scores(Var embeddings, const BoundHeads& heads);

// Mean cross-entropy of softmax(logits) against integer labels.
Var source_loss(Var logits, std::span<const int> labels);
// Mean Shannon entropy (nats) of softmax(logits) over rows.
Var target_entropy_loss(Var logits);
// Mean binary cross-entropy with both logs clamped at kDomainLogFloor.
// domain_ids are 0 (source) or 1 (target).
Var domain_loss(Var scores, std::span<const int> domain_ids);

struct LossBreakdown {
  double source = 0.0;
  double target = 0.0;
  double domain = 0.0;
  double total = 0.0;
};

struct ObjectiveVars {
  Var source, target, domain, total;
  LossBreakdown values() const;
};

struct ObjectiveOptions {
  double gamma1 = 0.3;   // target entropy weight
  double gamma2 = 0.1;   // domain loss weight
  bool use_grl = true;   // reverse the domain gradient into the encoders
};

// L = L_s + gamma1 L_t + gamma2 L_D. The domain head sees
// grl(concat_rows(Z_s, Z_t)) with labels 0 for source rows and 1 for target rows.
ObjectiveVars total_objective(Var source_embeddings, Var target_embeddings,
                              std::span<const int> source_labels, const BoundHeads& heads,
                              const ObjectiveOptions& options = {});

// Index of the largest entry per row; ties go to the lowest index.
std::vector<int> argmax_rows(const Tensor& scores);
double accuracy(std::span<const int> predicted, std::span<const int> truth);

}  // namespace sagda
