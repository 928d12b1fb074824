#include "sagda/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <tuple>

#include "sagda/config.hpp"
#include "sagda/error.hpp"
#include "sagda/hash.hpp"
#include "sagda/rng.hpp"

namespace sagda {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Invocation {
  std::string command;
  std::string pair;
  std::string model;
  std::string config_file;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  bool dump_embeddings = false;
};

json typed_value(const ConfigKey& key, const std::string& text) {
  switch (key.kind) {
    case ValueKind::Boolean: return text == "true";
    case ValueKind::Integer: return json::parse(text);
    case ValueKind::Number: return json::parse(text);
    case ValueKind::Text: return text;
  }
  return text;
}

json config_json(const RunConfig& cfg) {
  json j = json::object();
  for (const ConfigKey& k : config_keys()) j[k.name] = typed_value(k, k.get(cfg));
  return j;
}

std::string json_scalar_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

// A resolved-config.json replays a previous run: its config values become the
// file layer and its pair/model paths fill in unset flags.
void load_resolved(const fs::path& path, RunConfig& cfg, Invocation& inv) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open config file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("config") || !j["config"].is_object()) {
    throw ParseError(path.string() + ": expected a resolved-config object with \"config\"");
  }
  for (const auto& [key, value] : j["config"].items()) set_config_value(cfg, key, json_scalar_text(value));
  if (inv.pair.empty() && j.contains("pair") && j["pair"].is_string()) inv.pair = j["pair"];
  if (inv.model.empty() && j.contains("model") && j["model"].is_string()) inv.model = j["model"];
  if (j.contains("dump_embeddings") && j["dump_embeddings"].is_boolean())
    inv.dump_embeddings = inv.dump_embeddings || j["dump_embeddings"].get<bool>();
}

RunConfig resolve(Invocation& inv) {
  RunConfig cfg;
  if (!inv.config_file.empty()) {
    const fs::path path(inv.config_file);
    if (path.extension() == ".json") {
      load_resolved(path, cfg, inv);
    } else {
      for (const auto& [key, value] : parse_key_value_file(path)) set_config_value(cfg, key, value);
    }
  }
  if (inv.seed) set_config_value(cfg, "seed", std::to_string(*inv.seed));
  for (const std::string& s : inv.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + s + "'");
    set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  return cfg;
}

std::string absolute_or_empty(const std::string& p) {
  return p.empty() ? p : fs::absolute(p).lexically_normal().string();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(path.string() + ": cannot write");
  out << text;
  if (!out) throw Error(path.string() + ": write failed");
}

void write_resolved(const Invocation& inv, const RunConfig& cfg) {
  fs::create_directories(inv.out);
  json j;
  j["command"] = inv.command;
  j["pair"] = absolute_or_empty(inv.pair);
  j["model"] = absolute_or_empty(inv.model);
  j["out"] = absolute_or_empty(inv.out);
  j["dump_embeddings"] = inv.dump_embeddings;
  j["config"] = config_json(cfg);
  write_text(fs::path(inv.out) / "resolved-config.json", j.dump(2) + "\n");
}

DomainPair require_pair(const Invocation& inv) {
  if (inv.pair.empty()) throw ValidationError("--pair is required for " + inv.command);
  return load_pair(inv.pair);
}

json inputs_json(const DomainPair& pair) {
  json j;
  j["source"] = graph_content_hash(pair.source);
  j["target"] = graph_content_hash(pair.target);
  j["pair"] = git_blob_hash(j["source"].get<std::string>() + j["target"].get<std::string>());
  return j;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_embeddings_csv(const fs::path& path, const Tensor& z) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(path.string() + ": cannot write");
  out << "node";
  for (std::size_t j = 0; j < z.cols(); ++j) out << ",z" << j;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < z.rows(); ++i) {
    out << i;
    for (std::size_t j = 0; j < z.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", z(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

// ---- subcommands -------------------------------------------------------------------

int cmd_train(const Invocation& inv, const RunConfig& cfg, std::ostream& out) {
  const DomainPair pair = require_pair(inv);
  cfg.train.validate();
  const fs::path dir(inv.out);
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::trunc);
  if (!metrics) throw Error((dir / "metrics.jsonl").string() + ": cannot write");

  const Precomputed pre = precompute(pair, cfg.train.cache_dir);
  const TrainResult result = train(pair, cfg.train, pre, [&](const EpochRecord& r) {
    metrics << to_json_line(r) << '\n';
    metrics.flush();
    if (r.epoch % cfg.train.eval_every == 0 || r.epoch == cfg.train.epochs) {
      out << "epoch " << r.epoch << " L_s=" << fixed(r.loss.source) << " L_t="
          << fixed(r.loss.target) << " L_D=" << fixed(r.loss.domain)
          << " total=" << fixed(r.loss.total);
      if (r.acc) out << " acc=" << fixed(*r.acc);
      out << '\n';
    }
  });

  save_model(dir / "model.json", result.encoder, result.heads);
  if (inv.dump_embeddings) {
    const Embeddings z = embed(pair, cfg.train, pre, result.encoder);
    write_embeddings_csv(dir / "embeddings_source.csv", z.source);
    write_embeddings_csv(dir / "embeddings_target.csv", z.target);
  }

  json summary;
  summary["command"] = "train";
  summary["config"] = config_json(cfg);
  summary["inputs"] = inputs_json(pair);
  summary["epochs_run"] = result.records.size();
  summary["final"] = result.records.empty() ? json(nullptr)
                                            : json::parse(to_json_line(result.records.back()));
  const auto acc = result.final_accuracy();
  summary["target_accuracy"] = acc ? json(*acc) : json(nullptr);
  summary["diverged"] = result.abort_reason ? json(*result.abort_reason) : json(nullptr);
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  if (result.diverged()) {
    out << "aborted: " << *result.abort_reason << '\n';
    return kExitNumeric;
  }
  if (acc) out << "target accuracy " << fixed(*acc) << '\n';
  return kExitOk;
}

int cmd_eval(const Invocation& inv, const RunConfig& cfg, std::ostream& out) {
  const DomainPair pair = require_pair(inv);
  if (inv.model.empty()) throw ValidationError("--model is required for eval");
  const auto [encoder, heads] = load_model(inv.model);
  if (encoder.w1.value.rows() != pair.target.feature_dim() ||
      heads.num_classes() != static_cast<std::size_t>(pair.target.num_classes())) {
    throw ValidationError("eval: model shapes do not match the pair's feature or class count");
  }
  json j;
  j["command"] = "eval";
  j["inputs"] = inputs_json(pair);
  const double target = evaluate(pair.target, encoder, heads, cfg.train.use_global);
  j["target_accuracy"] = target;
  out << "target accuracy " << fixed(target) << '\n';
  write_text(fs::path(inv.out) / "eval.json", j.dump(2) + "\n");
  return kExitOk;
}

int cmd_spectra(const Invocation& inv, const RunConfig& cfg, std::ostream& out) {
  const DomainPair pair = require_pair(inv);
  const fs::path dir(inv.out);
  const SpectralBasis bs = laplacian_basis(pair.source, cfg.train.cache_dir);
  const SpectralBasis bt = laplacian_basis(pair.target, cfg.train.cache_dir);
  char buf[32];
  for (const auto& [name, basis] : {std::pair{"source", &bs}, std::pair{"target", &bt}}) {
    std::ostringstream csv;
    csv << "rank,eigenvalue\n";
    for (std::size_t i = 0; i < basis->size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", basis->values[i]);
      csv << i << ',' << buf << '\n';
    }
    write_text(dir / (std::string(name) + "_eigenvalues.csv"), csv.str());
  }
  json j;
  j["command"] = "spectra";
  j["inputs"] = inputs_json(pair);
  j["source_lambda_max"] = bs.values.back();
  j["target_lambda_max"] = bt.values.back();
  for (const auto& [name, g, basis] :
       {std::tuple{"source", &pair.source, &bs}, std::tuple{"target", &pair.target, &bt}}) {
    if (!g->has_labels()) continue;
    std::ostringstream csv;
    csv << "class";
    for (std::size_t i = 0; i < basis->size(); ++i) csv << ",r" << i;
    csv << '\n';
    for (int c = 0; c < g->num_classes(); ++c) {
      const Tensor sig = category_signature(*g, *basis, c);
      csv << c;
      for (double v : sig.data()) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        csv << ',' << buf;
      }
      csv << '\n';
    }
    write_text(dir / (std::string(name) + "_signatures.csv"), csv.str());
  }
  if (pair.target.has_labels()) {
    const Tensor corr = cross_domain_signature_correlation(pair, bs, bt);
    std::ostringstream csv;
    double diag = 0.0, off = 0.0;
    std::size_t n_off = 0;
    for (std::size_t i = 0; i < corr.rows(); ++i) {
      for (std::size_t k = 0; k < corr.cols(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", corr(i, k));
        csv << (k ? "," : "") << buf;
        if (i == k) {
          diag += corr(i, k);
        } else {
          off += corr(i, k);
          ++n_off;
        }
      }
      csv << '\n';
    }
    write_text(dir / "signature_correlation.csv", csv.str());
    j["diagonal_mean"] = diag / static_cast<double>(corr.rows());
    j["off_diagonal_mean"] = n_off ? json(off / static_cast<double>(n_off)) : json(nullptr);
    out << "signature correlation diagonal mean " << fixed(j["diagonal_mean"].get<double>());
    if (n_off) out << ", off-diagonal mean " << fixed(off / static_cast<double>(n_off));
    out << '\n';
  }
  write_text(dir / "spectra.json", j.dump(2) + "\n");
  out << "wrote " << bs.size() << " + " << bt.size() << " eigenvalues\n";
  return kExitOk;
}

json report_json(const BoundReport& r, const char* kind, std::size_t trial) {
  json j;
  j["kind"] = kind;
  j["trial"] = trial;
  j["lhs"] = r.lhs;
  j["linear_gap"] = r.linear_gap;
  j["lhs_literal"] = r.lhs_literal;
  j["first_order_rhs"] = r.first_order_rhs;
  j["delta_L"] = r.delta_L;
  j["delta_X"] = r.delta_X;
  j["tau"] = r.tau;
  j["C_lambda"] = r.c_lambda;
  j["g_max"] = r.g_max;
  j["holds"] = r.holds;
  j["permutation"] = r.permutation;
  return j;
}

int cmd_verify(const Invocation& inv, const RunConfig& cfg, std::ostream& out) {
  cfg.train.filter_bank.validate();
  SweepConfig sweep = cfg.sweep;
  sweep.seed = cfg.train.seed;
  sweep.verify.alpha = cfg.train.alpha;
  sweep.verify.filters = cfg.train.filter_bank;
  const fs::path dir(inv.out);
  std::ofstream lines(dir / "bounds.jsonl", std::ios::trunc);
  if (!lines) throw Error((dir / "bounds.jsonl").string() + ": cannot write");

  // Zero case: target is a relabeled copy of the source.
  double zero_max = 0.0;
  SweepConfig zero = sweep;
  zero.epsilon = 0.0;
  for (int i = 0; i < cfg.zero_case_pairs; ++i) {
    const PerturbedInstance inst = perturbed_instance(zero, 0x2e40 + static_cast<std::uint64_t>(i));
    Permutation perm(inst.source.num_nodes());
    for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
    Rng rng(derive_seed(sweep.seed, 0x2e41, static_cast<std::uint64_t>(i)));
    rng.shuffle(perm.begin(), perm.end());
    const BoundReport r = verify_bound(inst.source, inst.source.permuted(perm), inst.weight, sweep.verify);
    zero_max = std::max(zero_max, r.lhs);
    lines << report_json(r, "zero", static_cast<std::size_t>(i)).dump() << '\n';
  }

  std::size_t holds = 0;
  const auto reports = perturbation_sweep(sweep);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    holds += reports[i].holds;
    lines << report_json(reports[i], "perturbed", i).dump() << '\n';
  }
  json summary;
  summary["command"] = "verify-lemma";
  summary["zero_case_pairs"] = cfg.zero_case_pairs;
  summary["zero_case_max_lhs"] = zero_max;
  summary["trials"] = reports.size();
  summary["holds"] = holds;
  summary["pass_rate"] = reports.empty() ? 0.0 : static_cast<double>(holds) / static_cast<double>(reports.size());
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  out << "zero case: max lhs " << zero_max << " over " << cfg.zero_case_pairs << " pairs\n";
  out << "first-order bound holds in " << holds << "/" << reports.size() << " trials at epsilon "
      << sweep.epsilon << '\n';
  return kExitOk;
}

int cmd_gen_synth(const Invocation& inv, const RunConfig& cfg, std::ostream& out) {
  const DomainPair pair = generate_sbm_pair(cfg.sbm, cfg.train.seed);
  save_pair(pair, inv.out);
  out << "wrote " << (fs::path(inv.out) / "pair.json").string() << " (" << pair.source.num_nodes()
      << " + " << pair.target.num_nodes() << " nodes)\n";
  return kExitOk;
}

int cmd_ablate(const Invocation& inv, const RunConfig& cfg, std::ostream& out) {
  const DomainPair pair = require_pair(inv);
  cfg.train.validate();
  if (cfg.ablate_seeds < 1) throw ValidationError("config: ablate.seeds must be >= 1");
  if (!pair.target.has_labels()) throw ValidationError("ablate: target labels are required");
  const Precomputed pre = precompute(pair, cfg.train.cache_dir);

  json rows = json::array();
  std::ostringstream csv;
  csv << "variant,mean_accuracy,seeds\n";
  bool diverged = false;
  for (Variant v : all_variants()) {
    double total = 0.0;
    json accs = json::array();
    for (int s = 0; s < cfg.ablate_seeds; ++s) {
      TrainConfig tc = apply_variant(cfg.train, v);
      tc.seed = cfg.train.seed + static_cast<std::uint64_t>(s);
      const TrainResult r = train(pair, tc, pre);
      diverged = diverged || r.diverged();
      const double acc = r.final_accuracy().value_or(0.0);
      total += acc;
      accs.push_back(acc);
    }
    const double mean = total / cfg.ablate_seeds;
    csv << variant_name(v) << ',' << fixed(mean, 6) << ',' << cfg.ablate_seeds << '\n';
    json row;
    row["variant"] = variant_name(v);
    row["mean_accuracy"] = mean;
    row["accuracies"] = accs;
    rows.push_back(row);
    out << variant_name(v) << " " << fixed(mean) << '\n';
  }
  write_text(fs::path(inv.out) / "ablation.csv", csv.str());
  json summary;
  summary["command"] = "ablate";
  summary["config"] = config_json(cfg);
  summary["inputs"] = inputs_json(pair);
  summary["rows"] = rows;
  write_text(fs::path(inv.out) / "summary.json", summary.dump(2) + "\n");
  return diverged ? kExitNumeric : kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"sagda: spectral-augmented graph domain adaptation"};
  app.footer(describe_config_keys());
  app.require_subcommand(1, 1);
  Invocation inv;

  struct Spec {
    const char* name;
    const char* help;
    bool pair, model, dump;
  };
  const Spec specs[] = {
      {"train", "train on a domain pair and write metrics.jsonl, summary.json, model.json", true,
       false, true},
      {"eval", "evaluate a saved model on a pair's target graph", true, true, false},
      {"spectra", "write Laplacian spectra and class signature correlations", true, false, false},
      {"verify-lemma", "check the spectral stability bound on small perturbed graphs", false,
       false, false},
      {"gen-synth", "generate a synthetic SBM domain pair", false, false, false},
      {"ablate", "train the full model and its five ablation variants", true, false, false},
  };
  for (const Spec& s : specs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->footer(describe_config_keys());
    if (s.pair) sub->add_option("--pair", inv.pair, "pair.json manifest");
    if (s.model) sub->add_option("--model", inv.model, "model.json written by train");
    if (s.dump) sub->add_flag("--dump-embeddings", inv.dump_embeddings, "write Z_s and Z_t as CSV");
    sub->add_option("--config", inv.config_file, "key=value file or a resolved-config.json");
    sub->add_option("--out", inv.out, "output directory")->required();
    sub->add_option("--seed", inv.seed, "run seed (same as --set seed=N)");
    sub->add_option("--set", inv.sets, "override one config key: key=value (repeatable)");
    sub->callback([&inv, name = std::string(s.name)] { inv.command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }

  try {
    const RunConfig cfg = resolve(inv);
    write_resolved(inv, cfg);
    if (inv.command == "train") return cmd_train(inv, cfg, out);
    if (inv.command == "eval") return cmd_eval(inv, cfg, out);
    if (inv.command == "spectra") return cmd_spectra(inv, cfg, out);
    if (inv.command == "verify-lemma") return cmd_verify(inv, cfg, out);
    if (inv.command == "gen-synth") return cmd_gen_synth(inv, cfg, out);
    if (inv.command == "ablate") return cmd_ablate(inv, cfg, out);
    err << "error: unknown subcommand\n";
    return kExitInvalid;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
}

}  // namespace sagda
