#include "sagda/adversarial.hpp"

#include <string>

#include "sagda/dual_gnn.hpp"
#include "sagda/error.hpp"

namespace sagda {

Heads Heads::init(std::size_t embedding_dim, std::size_t num_classes, Rng& rng) {
  if (num_classes < 2) throw ContractError("Heads: need at least two classes");
  Heads h;
  h.label_weight = Parameter("label_weight", glorot_uniform(embedding_dim, num_classes, rng));
  h.label_bias = Parameter("label_bias", Tensor(1, num_classes));
  h.domain_weight = Parameter("domain_weight", glorot_uniform(embedding_dim, 1, rng));
  h.domain_bias = Parameter("domain_bias", Tensor(1, 1));
  return h;
}

std::vector<Parameter*> Heads::all() {
  return {&label_weight, &label_bias, &domain_weight, &domain_bias};
}

BoundHeads bind(Tape& tape, Heads& heads) {
  return {tape.param(heads.label_weight), tape.param(heads.label_bias),
          tape.param(heads.domain_weight), tape.param(heads.domain_bias)};
}

Var label_logits(Var embeddings, const BoundHeads& heads) {
  return add_row(matmul(embeddings, heads.label_weight), heads.label_bias);
}

Var domain_scores(Var embeddings, const BoundHeads& heads) {
  return sigmoid(add_row(matmul(embeddings, heads.domain_weight), heads.domain_bias));
}

Var source_loss(Var logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) {
    throw DimensionError("source_loss: " + std::to_string(labels.size()) + " labels for " +
                         logits.value().shape_string());
  }
  return neg(mean(pick(log_softmax_rows(logits), labels)));
}

Var target_entropy_loss(Var logits) {
  // log_softmax stays finite, so p * log p is 0 wherever p underflows.
  Var p = rowwise_softmax(logits);
  Var logp = log_softmax_rows(logits);
  return scale(sum(mul(p, logp)), -1.0 / static_cast<double>(logits.rows()));
}

Var domain_loss(Var scores, std::span<const int> domain_ids) {
  if (scores.cols() != 1 || domain_ids.size() != scores.rows()) {
    throw DimensionError("domain_loss: " + std::to_string(domain_ids.size()) + " ids for " +
                         scores.value().shape_string());
  }
  const std::size_t n = scores.rows();
  Tensor is_target(n, 1), is_source(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (domain_ids[i] != 0 && domain_ids[i] != 1) {
      throw ContractError("domain_loss: id " + std::to_string(domain_ids[i]) + " at row " +
                          std::to_string(i));
    }
    is_target(i, 0) = domain_ids[i];
    is_source(i, 0) = 1 - domain_ids[i];
  }
  Tape& tape = *scores.tape();
  Var log_p = clamped_log(scores, kDomainLogFloor);
  Var log_q = clamped_log(add_scalar(neg(scores), 1.0), kDomainLogFloor);
  Var ll = add(mul(tape.constant(std::move(is_target)), log_p),
               mul(tape.constant(std::move(is_source)), log_q));
  return neg(mean(ll));
}

LossBreakdown ObjectiveVars::values() const {
  return {source.value().scalar(), target.value().scalar(), domain.value().scalar(),
          total.value().scalar()};
}

ObjectiveVars total_objective(Var source_embeddings, Var target_embeddings,
                              std::span<const int> source_labels, const BoundHeads& heads,
                              const ObjectiveOptions& options) {
  if (source_embeddings.cols() != target_embeddings.cols()) {
    throw DimensionError("total_objective: embedding widths " +
                         source_embeddings.value().shape_string() + " vs " +
                         target_embeddings.value().shape_string());
  }
  ObjectiveVars out;
  out.source = source_loss(label_logits(source_embeddings, heads), source_labels);
  out.target = target_entropy_loss(label_logits(target_embeddings, heads));

  Var stacked = concat_rows(source_embeddings, target_embeddings);
  if (options.use_grl) stacked = grl(stacked);
  std::vector<int> ids(source_embeddings.rows() + target_embeddings.rows(), 0);
  for (std::size_t i = source_embeddings.rows(); i < ids.size(); ++i) ids[i] = 1;
  out.domain = domain_loss(domain_scores(stacked, heads), ids);

  out.total = add(add(out.source, scale(out.target, options.gamma1)),
                  scale(out.domain, options.gamma2));
  return out;
}

std::vector<int> argmax_rows(const Tensor& scores) {
  std::vector<int> out(scores.rows(), 0);
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    auto r = scores.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < r.size(); ++j)
      if (r[j] > r[best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw DimensionError("accuracy: length mismatch");
  if (truth.empty()) throw ContractError("accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace sagda
