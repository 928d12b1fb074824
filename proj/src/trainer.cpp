#include "sagda/trainer.hpp"

#include <unistd.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "sagda/error.hpp"
#include "sagda/hash.hpp"
#include "sagda/optim.hpp"
#include "sagda/rng.hpp"

namespace sagda {

namespace {

constexpr std::uint64_t kInitStream = 0x1d;
constexpr std::uint64_t kDropoutStream = 0x2d;

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError("config: " + message);
}

bool finite(const LossBreakdown& l) {
  return std::isfinite(l.source) && std::isfinite(l.target) && std::isfinite(l.domain) &&
         std::isfinite(l.total);
}

std::vector<Parameter*> all_params(EncoderParams& e, Heads& h) {
  std::vector<Parameter*> out = e.all();
  for (Parameter* p : h.all()) out.push_back(p);
  return out;
}

// ---- binary cache files ----------------------------------------------------

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& bytes;
  std::size_t pos = 0;

  std::uint64_t u64() {
    if (pos + 8 > bytes.size()) throw ParseError("cache entry truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  Tensor tensor() {
    const std::size_t r = u64(), c = u64();
    if (r * c > (bytes.size() - pos) / 8) throw ParseError("cache entry truncated");
    std::vector<double> data(r * c);
    for (double& v : data) v = f64();
    return Tensor(r, c, std::move(data));
  }
};

std::string encode_tensor(const Tensor& t) {
  std::string out;
  put_u64(out, t.rows());
  put_u64(out, t.cols());
  for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

std::optional<std::string> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("cache: cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

constexpr std::string_view kEigMagic = "sagda-eig-1\n";
constexpr std::string_view kPpmiMagic = "sagda-ppmi-1\n";

std::optional<SpectralBasis> load_basis(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  if (!bytes || !bytes->starts_with(kEigMagic)) return std::nullopt;
  try {
    Reader r{*bytes, kEigMagic.size()};
    SpectralBasis b;
    const Tensor values = r.tensor();
    b.vectors = r.tensor();
    b.values.assign(values.data().begin(), values.data().end());
    return b;
  } catch (const ParseError&) {
    return std::nullopt;
  }
}

void store_basis(const std::filesystem::path& path, const SpectralBasis& b) {
  std::string bytes(kEigMagic);
  bytes += encode_tensor(Tensor::column(b.values));
  bytes += encode_tensor(b.vectors);
  write_atomic(path, bytes);
}

std::optional<PpmiCache> load_ppmi(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  if (!bytes || !bytes->starts_with(kPpmiMagic)) return std::nullopt;
  try {
    Reader r{*bytes, kPpmiMagic.size()};
    PpmiCache c;
    c.transition = r.tensor();
    c.ppmi = r.tensor();
    c.normalized = r.tensor();
    return c;
  } catch (const ParseError&) {
    return std::nullopt;
  }
}

void store_ppmi(const std::filesystem::path& path, const PpmiCache& c) {
  std::string bytes(kPpmiMagic);
  bytes += encode_tensor(c.transition);
  bytes += encode_tensor(c.ppmi);
  bytes += encode_tensor(c.normalized);
  write_atomic(path, bytes);
}

std::int64_t elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                               start)
      .count();
}

Tensor target_logits(const TargetOperators& ops, EncoderParams& params, Heads& heads,
                     bool use_global) {
  Tape tape;
  BoundEncoder enc = bind(tape, params);
  BoundHeads hb = bind(tape, heads);
  TargetEncodeOptions options;
  options.use_global = use_global;
  return label_logits(encode_target(tape, ops, enc, options), hb).value();
}

}  // namespace

// ---- config ------------------------------------------------------------------

void TrainConfig::validate() const {
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
  require(beta >= 0.0 && beta <= 1.0, "beta must lie in [0, 1]");
  require(gamma1 >= 0.0 && std::isfinite(gamma1), "gamma1 must be finite and >= 0");
  require(gamma2 >= 0.0 && std::isfinite(gamma2), "gamma2 must be finite and >= 0");
  require(lr > 0.0 && std::isfinite(lr), "lr must be finite and > 0");
  require(epochs >= 0, "epochs must be >= 0");
  require(hidden1 >= 1 && hidden2 >= 1, "hidden sizes must be >= 1");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(eval_every >= 1, "eval_every must be >= 1");
  filter_bank.validate();
}

FilterBank TrainConfig::filters() const {
  FilterBank f = filter_bank;
  if (!use_low) f.low = Polynomial{{0.0}};
  if (!use_high) f.high = Polynomial{{0.0}};
  return f;
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoLow: return "no-low";
    case Variant::NoHigh: return "no-high";
    case Variant::NoGlobal: return "no-global";
    case Variant::NoDomain: return "no-domain";
    case Variant::NoTarget: return "no-target";
  }
  return "?";
}

std::vector<Variant> all_variants() {
  return {Variant::Full,     Variant::NoLow,    Variant::NoHigh,
          Variant::NoGlobal, Variant::NoDomain, Variant::NoTarget};
}

TrainConfig apply_variant(TrainConfig cfg, Variant v) {
  switch (v) {
    case Variant::Full: break;
    case Variant::NoLow: cfg.use_low = false; break;
    case Variant::NoHigh: cfg.use_high = false; break;
    case Variant::NoGlobal: cfg.use_global = false; break;
    case Variant::NoDomain: cfg.gamma2 = 0.0; break;
    case Variant::NoTarget: cfg.gamma1 = 0.0; break;
  }
  return cfg;
}

std::string to_json_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["L_s"] = r.loss.source;
  j["L_t"] = r.loss.target;
  j["L_D"] = r.loss.domain;
  j["total"] = r.loss.total;
  j["acc"] = r.acc ? nlohmann::ordered_json(*r.acc) : nlohmann::ordered_json(nullptr);
  j["ms"] = r.ms;
  return j.dump();
}

// ---- precompute ----------------------------------------------------------------

SpectralBasis laplacian_basis(const Graph& g, const std::filesystem::path& cache_dir) {
  if (cache_dir.empty()) return eig_sym(normalized_laplacian(g));
  const auto path = cache_dir / (structure_hash(g) + ".eig");
  if (auto hit = load_basis(path)) return *hit;
  SpectralBasis b = eig_sym(normalized_laplacian(g));
  store_basis(path, b);
  return b;
}

PpmiCache ppmi_cache(const Graph& g, const std::filesystem::path& cache_dir) {
  if (cache_dir.empty()) return PpmiCache::build(g);
  const auto path = cache_dir / (structure_hash(g) + ".ppmi");
  if (auto hit = load_ppmi(path)) return *hit;
  PpmiCache c = PpmiCache::build(g);
  store_ppmi(path, c);
  return c;
}

Precomputed precompute(const DomainPair& pair, const std::filesystem::path& cache_dir) {
  return {laplacian_basis(pair.source, cache_dir), laplacian_basis(pair.target, cache_dir),
          ppmi_cache(pair.target, cache_dir)};
}

// ---- training ------------------------------------------------------------------

std::optional<double> TrainResult::final_accuracy() const {
  if (records.empty()) return std::nullopt;
  return records.back().acc;
}

TrainResult train(const DomainPair& pair, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (cfg.epochs == 0) return train(pair, cfg, Precomputed{}, on_epoch);
  return train(pair, cfg, precompute(pair, cfg.cache_dir), on_epoch);
}

TrainResult train(const DomainPair& pair, const TrainConfig& cfg, const Precomputed& pre,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  Rng init_rng(derive_seed(cfg.seed, kInitStream));
  TrainResult result{
      EncoderParams::init(pair.source.feature_dim(), cfg.hidden1, cfg.hidden2, init_rng), {}, {},
      std::nullopt};
  result.heads = Heads::init(cfg.hidden2, static_cast<std::size_t>(pair.source.num_classes()),
                             init_rng);
  if (cfg.epochs == 0) return result;

  const SpectralMixConfig mix = cfg.mix();
  mix.validate(pair.source.num_nodes(), pair.target.num_nodes());
  const SourceOperators source_ops =
      SourceOperators::build(pair, pre.source_basis, pre.target_basis, mix, cfg.filters());
  const TargetOperators target_ops = TargetOperators::build(pair.target, pre.target_ppmi);
  const std::span<const int> labels = pair.source.labels();

  std::vector<Parameter*> params = all_params(result.encoder, result.heads);
  AdamState adam;
  const ObjectiveOptions objective{cfg.gamma1, cfg.gamma2, true};

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      Tape tape;
      BoundEncoder enc = bind(tape, result.encoder);
      BoundHeads hb = bind(tape, result.heads);
      Var z_s = encode_source(tape, source_ops, enc);
      TargetEncodeOptions options;
      options.use_global = cfg.use_global;
      options.dropout = {cfg.dropout,
                         derive_seed(cfg.seed, kDropoutStream, static_cast<std::uint64_t>(epoch))};
      Var z_t = encode_target(tape, target_ops, enc, options);
      ObjectiveVars obj = total_objective(z_s, z_t, labels, hb, objective);
      rec.loss = obj.values();
      if (!finite(rec.loss)) {
        result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch);
        break;
      }
      for (Parameter* p : params) p->zero_grad();
      tape.backward(obj.total);
      adam_step(params, adam, cfg.lr);
      if (pair.target.has_labels()) {
        const Tensor logits =
            target_logits(target_ops, result.encoder, result.heads, cfg.use_global);
        rec.acc = accuracy(argmax_rows(logits), pair.target.labels());
      }
    } catch (const NumericError& e) {
      // Debug builds check every recorded op and can fail before the loss exists.
      result.abort_reason = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    rec.ms = cfg.record_time ? elapsed_ms(start) : 0;
    result.records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

Tensor predict(const Graph& g, const EncoderParams& params, const Heads& heads, bool use_global) {
  // Binding needs mutable parameters; work on copies so callers keep theirs const.
  EncoderParams p = params;
  Heads h = heads;
  return target_logits(TargetOperators::build(g), p, h, use_global);
}

double evaluate(const Graph& g, const EncoderParams& params, const Heads& heads, bool use_global) {
  if (!g.has_labels()) throw ContractError("evaluate: graph has no labels");
  return accuracy(argmax_rows(predict(g, params, heads, use_global)), g.labels());
}

Embeddings embed(const DomainPair& pair, const TrainConfig& cfg, const Precomputed& pre,
                 const EncoderParams& params) {
  const SourceOperators source_ops =
      SourceOperators::build(pair, pre.source_basis, pre.target_basis, cfg.mix(), cfg.filters());
  const TargetOperators target_ops = TargetOperators::build(pair.target, pre.target_ppmi);
  EncoderParams p = params;
  Tape tape;
  BoundEncoder enc = bind(tape, p);
  TargetEncodeOptions options;
  options.use_global = cfg.use_global;
  Embeddings out;
  out.source = encode_source(tape, source_ops, enc).value();
  out.target = encode_target(tape, target_ops, enc, options).value();
  return out;
}

namespace {

nlohmann::ordered_json tensor_json(const Tensor& t) {
  nlohmann::ordered_json j;
  j["rows"] = t.rows();
  j["cols"] = t.cols();
  j["data"] = std::vector<double>(t.data().begin(), t.data().end());
  return j;
}

void read_tensor(const nlohmann::json& j, const std::string& name, Parameter& out,
                 const std::filesystem::path& path) {
  try {
    const auto& t = j.at(name);
    out = Parameter(name, Tensor(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>(),
                                 t.at("data").get<std::vector<double>>()));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": field '" + name + "': " + e.what());
  }
}

}  // namespace

void save_model(const std::filesystem::path& path, const EncoderParams& encoder, const Heads& heads) {
  nlohmann::ordered_json j;
  EncoderParams e = encoder;
  Heads h = heads;
  for (Parameter* p : e.all()) j["encoder"][p->name] = tensor_json(p->value);
  for (Parameter* p : h.all()) j["heads"][p->name] = tensor_json(p->value);
  write_atomic(path, j.dump() + "\n");
}

std::pair<EncoderParams, Heads> load_model(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  if (!bytes) throw ParseError(path.string() + ": cannot open model file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(*bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (!j.contains("encoder") || !j.contains("heads")) {
    throw ParseError(path.string() + ": expected \"encoder\" and \"heads\" objects");
  }
  EncoderParams e;
  Heads h;
  const std::pair<const char*, Parameter*> encoder_fields[] = {
      {"w1", &e.w1},
      {"w2", &e.w2},
      {"attention_proj", &e.attention_proj},
      {"attention_local", &e.attention_local},
      {"attention_global", &e.attention_global}};
  for (const auto& [name, param] : encoder_fields) read_tensor(j["encoder"], name, *param, path);
  const std::pair<const char*, Parameter*> head_fields[] = {{"label_weight", &h.label_weight},
                                                            {"label_bias", &h.label_bias},
                                                            {"domain_weight", &h.domain_weight},
                                                            {"domain_bias", &h.domain_bias}};
  for (const auto& [name, param] : head_fields) read_tensor(j["heads"], name, *param, path);

  const std::size_t h1 = e.w1.value.cols(), h2 = e.w2.value.cols();
  const bool consistent =
      e.w2.value.rows() == h1 && e.attention_proj.value.rows() == h2 &&
      e.attention_proj.value.cols() == h2 && e.attention_local.value.rows() == 2 * h2 &&
      e.attention_local.value.cols() == 1 && e.attention_global.value.rows() == 2 * h2 &&
      e.attention_global.value.cols() == 1 && h.label_weight.value.rows() == h2 &&
      h.label_bias.value.rows() == 1 && h.label_bias.value.cols() == h.label_weight.value.cols() &&
      h.domain_weight.value.rows() == h2 && h.domain_weight.value.cols() == 1 &&
      h.domain_bias.value.rows() == 1 && h.domain_bias.value.cols() == 1;
  if (!consistent) throw ParseError(path.string() + ": parameter shapes are inconsistent");
  return {e, h};
}

BaselineResult train_source_only(const DomainPair& pair, const TrainConfig& cfg) {
  cfg.validate();
  Rng init_rng(derive_seed(cfg.seed, kInitStream));
  EncoderParams encoder =
      EncoderParams::init(pair.source.feature_dim(), cfg.hidden1, cfg.hidden2, init_rng);
  Heads heads =
      Heads::init(cfg.hidden2, static_cast<std::size_t>(pair.source.num_classes()), init_rng);
  std::vector<Parameter*> params{&encoder.w1, &encoder.w2, &heads.label_weight, &heads.label_bias};

  const Tensor source_prop = renormalized_propagation(pair.source);
  const Tensor target_prop = renormalized_propagation(pair.target);
  const std::span<const int> labels = pair.source.labels();
  AdamState adam;
  BaselineResult result;

  auto target_accuracy = [&]() -> std::optional<double> {
    if (!pair.target.has_labels()) return std::nullopt;
    Tape tape;
    BoundEncoder enc = bind(tape, encoder);
    BoundHeads hb = bind(tape, heads);
    Var z = encode_local(tape, target_prop, pair.target.features(), enc, {});
    return accuracy(argmax_rows(label_logits(z, hb).value()), pair.target.labels());
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      Tape tape;
      BoundEncoder enc = bind(tape, encoder);
      BoundHeads hb = bind(tape, heads);
      DropoutPlan dropout{cfg.dropout,
                          derive_seed(cfg.seed, kDropoutStream, static_cast<std::uint64_t>(epoch))};
      Var z = encode_local(tape, source_prop, pair.source.features(), enc, dropout);
      Var loss = source_loss(label_logits(z, hb), labels);
      rec.loss.source = rec.loss.total = loss.value().scalar();
      if (!std::isfinite(rec.loss.total)) {
        result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch);
        break;
      }
      for (Parameter* p : params) p->zero_grad();
      tape.backward(loss);
      adam_step(params, adam, cfg.lr);
      rec.acc = target_accuracy();
    } catch (const NumericError& e) {
      result.abort_reason = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    rec.ms = cfg.record_time ? elapsed_ms(start) : 0;
    result.records.push_back(rec);
  }
  if (!result.records.empty() && result.records.back().acc) {
    result.accuracy = *result.records.back().acc;
  } else if (result.records.empty() && !result.abort_reason) {
    if (auto acc = target_accuracy()) result.accuracy = *acc;
  }
  return result;
}

double train_source_only_baseline(const DomainPair& pair, const TrainConfig& cfg) {
  if (!pair.target.has_labels()) throw ContractError("baseline: target labels required");
  return train_source_only(pair, cfg).accuracy;
}

}  // namespace sagda
