#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sagda/adversarial.hpp"
#include "sagda/dual_gnn.hpp"
#include "sagda/graph.hpp"
#include "sagda/spectral.hpp"

namespace sagda {

struct TrainConfig {
  double alpha = 0.8;
  double beta = 0.8;
  double gamma1 = 0.3;
  double gamma2 = 0.1;
  double lr = 1e-4;
  int epochs = 300;
  std::size_t hidden1 = 128;
  std::size_t hidden2 = 16;
  double dropout = 0.3;
  std::uint64_t seed = 0;
  std::size_t k = 0;  // 0 selects min(n_s, n_t)
  int eval_every = 10;

  FilterBank filter_bank = FilterBank::defaults();
  // Ablation switches.
  bool use_low = true;     // keep g_L
  bool use_high = true;    // keep g_H
  bool use_global = true;  // keep the PPMI branch

  bool record_time = true;  // false writes ms = 0 so metrics are reproducible
  std::string cache_dir;    // empty disables the on-disk precompute cache

  // Throws ValidationError naming the offending field.
  void validate() const;
  FilterBank filters() const;
  SpectralMixConfig mix() const { return {alpha, beta, k}; }
};

enum class Variant { Full, NoLow, NoHigh, NoGlobal, NoDomain, NoTarget };

const char* variant_name(Variant v);
std::vector<Variant> all_variants();
TrainConfig apply_variant(TrainConfig cfg, Variant v);

struct EpochRecord {
  int epoch = 0;
  LossBreakdown loss;
  std::optional<double> acc;  // absent when the target is unlabeled
  std::int64_t ms = 0;
};

// One metrics line: {"epoch","L_s","L_t","L_D","total","acc","ms"}.
std::string to_json_line(const EpochRecord& r);

/// Structure-derived operators computed once before training.
struct Precomputed {
  SpectralBasis source_basis;
  SpectralBasis target_basis;
  PpmiCache target_ppmi;
};

// Uses `cache_dir` when nonempty: entries are keyed by the adjacency hash and
// written via a temporary file and rename.
Precomputed precompute(const DomainPair& pair, const std::filesystem::path& cache_dir = {});
SpectralBasis laplacian_basis(const Graph& g, const std::filesystem::path& cache_dir = {});
PpmiCache ppmi_cache(const Graph& g, const std::filesystem::path& cache_dir = {});

struct TrainResult {
  EncoderParams encoder;
  Heads heads;
  std::vector<EpochRecord> records;
  std::optional<std::string> abort_reason;  // set on a non-finite loss

  bool diverged() const { return abort_reason.has_value(); }
  std::optional<double> final_accuracy() const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Deterministic under cfg.seed. A non-finite loss stops the loop before the
// update; the records then end at the last finite epoch.
TrainResult train(const DomainPair& pair, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});
TrainResult train(const DomainPair& pair, const TrainConfig& cfg, const Precomputed& pre,
                  const EpochCallback& on_epoch = {});

// Target-side logits from the dual encoder in inference mode.
Tensor predict(const Graph& g, const EncoderParams& params, const Heads& heads,
               bool use_global = true);
// Fraction of argmax hits; throws ContractError for an unlabeled graph.
double evaluate(const Graph& g, const EncoderParams& params, const Heads& heads,
                bool use_global = true);

struct Embeddings {
  Tensor source;
  Tensor target;
};
Embeddings embed(const DomainPair& pair, const TrainConfig& cfg, const Precomputed& pre,
                 const EncoderParams& params);

struct BaselineResult {
  double accuracy = 0.0;
  std::vector<EpochRecord> records;
  std::optional<std::string> abort_reason;
};

// Trained weights as JSON ({"encoder": {...}, "heads": {...}}), doubles in
// shortest round-trip form.
void save_model(const std::filesystem::path& path, const EncoderParams& encoder, const Heads& heads);
std::pair<EncoderParams, Heads> load_model(const std::filesystem::path& path);

// Two-layer local GCN trained on the source with L_s only for cfg.epochs,
// evaluated on the target with the same encoder.
BaselineResult train_source_only(const DomainPair& pair, const TrainConfig& cfg);
double train_source_only_baseline(const DomainPair& pair, const TrainConfig& cfg);

}  // namespace sagda
