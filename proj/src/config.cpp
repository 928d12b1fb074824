#include "sagda/config.hpp"

#include <algorithm>
#include <charconv>
#include <type_traits>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sagda/error.hpp"

namespace sagda {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ValidationError("config key '" + std::string(key) + "': cannot parse '" +
                        std::string(value) + "' as " + expected);
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::to_string(v);
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string s = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    bad_value(key, text, "a finite number");
  }
  return v;
}

long long parse_integer(std::string_view key, std::string_view text) {
  const std::string s = trim(text);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) bad_value(key, text, "an integer");
  return v;
}

std::size_t parse_count(std::string_view key, std::string_view text) {
  const long long v = parse_integer(key, text);
  if (v < 0) bad_value(key, text, "a nonnegative integer");
  return static_cast<std::size_t>(v);
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  bad_value(key, text, "true/false");
}

std::vector<double> parse_list(std::string_view key, std::string_view text) {
  std::vector<double> out;
  const std::string s = trim(text);
  if (s.empty()) return out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::size_t end = comma == std::string::npos ? s.size() : comma;
    out.push_back(parse_double(key, std::string_view(s).substr(start, end - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string format_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_number(values[i]);
  return out;
}

template <typename Ref>
ConfigKey real_key(std::string name, std::string help, Ref ref) {
  return {name, ValueKind::Number, std::move(help),
          [ref](const RunConfig& c) { return format_number(ref(const_cast<RunConfig&>(c))); },
          [ref, name](RunConfig& c, std::string_view v) { ref(c) = parse_double(name, v); }};
}

template <typename Ref>
ConfigKey count_key(std::string name, std::string help, Ref ref) {
  return {name, ValueKind::Integer, std::move(help),
          [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref, name](RunConfig& c, std::string_view v) {
            using T = std::remove_reference_t<decltype(ref(c))>;
            if constexpr (std::is_signed_v<T>) {
              ref(c) = static_cast<T>(parse_integer(name, v));
            } else {
              ref(c) = static_cast<T>(parse_count(name, v));
            }
          }};
}

template <typename Ref>
ConfigKey bool_key(std::string name, std::string help, Ref ref) {
  return {name, ValueKind::Boolean, std::move(help),
          [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)) ? "true" : "false"; },
          [ref, name](RunConfig& c, std::string_view v) { ref(c) = parse_bool(name, v); }};
}

template <typename Ref>
ConfigKey list_key(std::string name, std::string help, Ref ref) {
  return {name, ValueKind::Text, std::move(help),
          [ref](const RunConfig& c) { return format_list(ref(const_cast<RunConfig&>(c))); },
          [ref, name](RunConfig& c, std::string_view v) { ref(c) = parse_list(name, v); }};
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k;
  // Training.
  k.push_back(real_key("alpha", "source weight on high-frequency content",
                       [](RunConfig& c) -> double& { return c.train.alpha; }));
  k.push_back(real_key("beta", "source weight on low-frequency content",
                       [](RunConfig& c) -> double& { return c.train.beta; }));
  k.push_back(real_key("gamma1", "target entropy loss weight",
                       [](RunConfig& c) -> double& { return c.train.gamma1; }));
  k.push_back(real_key("gamma2", "domain adversarial loss weight",
                       [](RunConfig& c) -> double& { return c.train.gamma2; }));
  k.push_back(real_key("lr", "Adam learning rate", [](RunConfig& c) -> double& { return c.train.lr; }));
  k.push_back(count_key("epochs", "training epochs", [](RunConfig& c) -> int& { return c.train.epochs; }));
  k.push_back(count_key("hidden1", "first hidden width",
                        [](RunConfig& c) -> std::size_t& { return c.train.hidden1; }));
  k.push_back(count_key("hidden2", "embedding width",
                        [](RunConfig& c) -> std::size_t& { return c.train.hidden2; }));
  k.push_back(real_key("dropout", "dropout rate after each dual-GNN layer",
                       [](RunConfig& c) -> double& { return c.train.dropout; }));
  k.push_back(count_key("seed", "run seed",
                        [](RunConfig& c) -> std::uint64_t& { return c.train.seed; }));
  k.push_back(count_key("k", "spectral components mixed (0 = min(n_s, n_t))",
                        [](RunConfig& c) -> std::size_t& { return c.train.k; }));
  k.push_back(count_key("eval_every", "epochs between progress lines",
                        [](RunConfig& c) -> int& { return c.train.eval_every; }));
  k.push_back(list_key("filter.low", "g_L polynomial coefficients, increasing degree",
                       [](RunConfig& c) -> std::vector<double>& {
                         return c.train.filter_bank.low.coefficients;
                       }));
  k.push_back(list_key("filter.high", "g_H polynomial coefficients, increasing degree",
                       [](RunConfig& c) -> std::vector<double>& {
                         return c.train.filter_bank.high.coefficients;
                       }));
  k.push_back(bool_key("use_low", "keep the low-pass filter",
                       [](RunConfig& c) -> bool& { return c.train.use_low; }));
  k.push_back(bool_key("use_high", "keep the high-pass filter",
                       [](RunConfig& c) -> bool& { return c.train.use_high; }));
  k.push_back(bool_key("use_global", "keep the PPMI branch",
                       [](RunConfig& c) -> bool& { return c.train.use_global; }));
  k.push_back(bool_key("record_time", "write wall-clock ms per epoch (false writes 0)",
                       [](RunConfig& c) -> bool& { return c.train.record_time; }));
  k.push_back({"cache_dir", ValueKind::Text, "precompute cache directory (empty disables)",
               [](const RunConfig& c) { return c.train.cache_dir; },
               [](RunConfig& c, std::string_view v) { c.train.cache_dir = trim(v); }});
  k.push_back(count_key("ablate.seeds", "seeds per variant in ablate",
                        [](RunConfig& c) -> int& { return c.ablate_seeds; }));

  // Synthetic generator.
  k.push_back(count_key("sbm.num_classes", "classes",
                        [](RunConfig& c) -> int& { return c.sbm.num_classes; }));
  k.push_back(count_key("sbm.feature_dim", "feature dimension",
                        [](RunConfig& c) -> std::size_t& { return c.sbm.feature_dim; }));
  k.push_back(real_key("sbm.mean_scale", "class mean magnitude along its axis",
                       [](RunConfig& c) -> double& { return c.sbm.mean_scale; }));
  k.push_back(real_key("sbm.shift", "target mean shift magnitude",
                       [](RunConfig& c) -> double& { return c.sbm.shift; }));
  k.push_back(real_key("sbm.noise", "feature noise standard deviation",
                       [](RunConfig& c) -> double& { return c.sbm.noise; }));
  for (const char* side : {"source", "target"}) {
    const std::string p = std::string("sbm.") + side + ".";
    const bool src = std::string_view(side) == "source";
    auto dom = [src](RunConfig& c) -> SbmDomain& { return src ? c.sbm.source : c.sbm.target; };
    k.push_back(count_key(p + "n", "nodes", [dom](RunConfig& c) -> std::size_t& { return dom(c).n; }));
    k.push_back(real_key(p + "p_in", "intra-class edge probability",
                         [dom](RunConfig& c) -> double& { return dom(c).p_in; }));
    k.push_back(real_key(p + "p_out", "inter-class edge probability",
                         [dom](RunConfig& c) -> double& { return dom(c).p_out; }));
    k.push_back(list_key(p + "proportions", "class proportions (empty = balanced)",
                         [dom](RunConfig& c) -> std::vector<double>& { return dom(c).proportions; }));
  }

  // Bound verification.
  k.push_back(count_key("verify.trials", "perturbation trials",
                        [](RunConfig& c) -> std::size_t& { return c.sweep.trials; }));
  k.push_back(count_key("verify.nodes", "nodes per trial graph",
                        [](RunConfig& c) -> std::size_t& { return c.sweep.nodes; }));
  k.push_back(count_key("verify.feature_dim", "feature dimension",
                        [](RunConfig& c) -> std::size_t& { return c.sweep.feature_dim; }));
  k.push_back(count_key("verify.out_dim", "output dimension of W",
                        [](RunConfig& c) -> std::size_t& { return c.sweep.out_dim; }));
  k.push_back(real_key("verify.epsilon", "perturbation magnitude",
                       [](RunConfig& c) -> double& { return c.sweep.epsilon; }));
  k.push_back(real_key("verify.edge_prob", "edge probability of trial graphs",
                       [](RunConfig& c) -> double& { return c.sweep.edge_prob; }));
  k.push_back({"verify.greedy", ValueKind::Boolean, "greedy (non-optimal) permutation search",
               [](const RunConfig& c) {
                 return c.sweep.verify.search == PermutationSearch::Greedy ? "true" : "false";
               },
               [](RunConfig& c, std::string_view v) {
                 c.sweep.verify.search = parse_bool("verify.greedy", v) ? PermutationSearch::Greedy
                                                                        : PermutationSearch::Exhaustive;
               }});
  k.push_back(count_key("verify.zero_pairs", "permuted pairs in the zero-case check",
                        [](RunConfig& c) -> int& { return c.zero_case_pairs; }));
  return k;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

namespace {

const ConfigKey& find_key(std::string_view key) {
  for (const ConfigKey& k : config_keys())
    if (k.name == key) return k;
  throw ValidationError("unknown config key '" + std::string(key) + "' (see --help for the list)");
}

}  // namespace

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  find_key(key).set(cfg, value);
}

std::string get_config_value(const RunConfig& cfg, std::string_view key) {
  return find_key(key).get(cfg);
}

std::vector<std::pair<std::string, std::string>> parse_key_value_text(std::string_view text,
                                                                      const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    std::string_view line = text.substr(start, end - start);
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (!trim(line).empty()) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos || trim(line.substr(0, eq)).empty()) {
        throw ParseError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      }
      out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_key_value_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_key_value_text(buf.str(), path.string());
}

std::string describe_config_keys() {
  const RunConfig defaults;
  std::size_t width = 0;
  for (const ConfigKey& k : config_keys()) width = std::max(width, k.name.size());
  std::string out = "Config keys (set with --config FILE or --set key=value):\n";
  for (const ConfigKey& k : config_keys()) {
    std::string def = k.get(defaults);
    if (def.empty()) def = "\"\"";
    out += "  " + k.name + std::string(width - k.name.size() + 2, ' ') + "default " + def + "  " +
           k.help + "\n";
  }
  return out;
}

}  // namespace sagda
