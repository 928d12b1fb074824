#include "sagda/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <utility>

#include "sagda/error.hpp"
#include "sagda/rng.hpp"

namespace sagda {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const fs::path& file, std::size_t line, const std::string& message) {
  throw ParseError(file.string() + ":" + std::to_string(line) + ": " + message);
}

std::ifstream open_input(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError(file.string() + ": cannot open");
  return in;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> split_spaces(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

std::size_t parse_index(std::string_view s, std::size_t n, const fs::path& file, std::size_t line,
                        const char* what) {
  long long v = 0;
  if (!parse_number(s, v)) fail(file, line, std::string(what) + " '" + std::string(s) + "' is not an integer");
  if (v < 0 || static_cast<unsigned long long>(v) >= n) {
    fail(file, line, std::string(what) + " " + std::to_string(v) + " out of range [0, " +
                         std::to_string(n) + ")");
  }
  return static_cast<std::size_t>(v);
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

Tensor read_features(const fs::path& file) {
  std::ifstream in = open_input(file);
  std::string line;
  if (!std::getline(in, line)) fail(file, 1, "missing 'n d' header");
  strip_cr(line);
  const auto header = split_spaces(line);
  long long n = 0, d = 0;
  if (header.size() != 2 || !parse_number(header[0], n) || !parse_number(header[1], d) || n < 0 ||
      d < 1) {
    fail(file, 1, "header must be 'n d' with n >= 0 and d >= 1");
  }
  Tensor x(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const std::size_t lineno = i + 2;
    if (!std::getline(in, line)) fail(file, lineno, "expected " + std::to_string(n) + " feature rows");
    strip_cr(line);
    const auto fields = split_spaces(line);
    if (fields.size() != x.cols()) {
      fail(file, lineno, "expected " + std::to_string(d) + " values, found " +
                             std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double v = 0.0;
      if (!parse_number(fields[j], v) || !std::isfinite(v)) {
        fail(file, lineno, "bad value '" + std::string(fields[j]) + "'");
      }
      x(i, j) = v;
    }
  }
  std::size_t lineno = x.rows() + 1;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (!line.empty()) fail(file, lineno, "unexpected data after " + std::to_string(n) + " rows");
  }
  return x;
}

Tensor read_edges(const fs::path& file, std::size_t n) {
  std::ifstream in = open_input(file);
  Tensor a(n, n);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 2) fail(file, lineno, "expected 'u<TAB>v'");
    const std::size_t u = parse_index(fields[0], n, file, lineno, "node");
    const std::size_t v = parse_index(fields[1], n, file, lineno, "node");
    if (u == v) fail(file, lineno, "self-loop on node " + std::to_string(u));
    if (!seen.insert(std::minmax(u, v)).second) {
      fail(file, lineno, "duplicate edge " + std::to_string(u) + "-" + std::to_string(v));
    }
    a(u, v) = a(v, u) = 1.0;
  }
  return a;
}

std::vector<int> read_labels(const fs::path& file, std::size_t n, int num_classes) {
  std::ifstream in = open_input(file);
  std::vector<int> labels(n, -1);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 2) fail(file, lineno, "expected 'node<TAB>label'");
    const std::size_t node = parse_index(fields[0], n, file, lineno, "node");
    const std::size_t label =
        parse_index(fields[1], static_cast<std::size_t>(num_classes), file, lineno, "label");
    if (labels[node] != -1) fail(file, lineno, "node " + std::to_string(node) + " labeled twice");
    labels[node] = static_cast<int>(label);
  }
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] == -1) throw ParseError(file.string() + ": node " + std::to_string(i) + " has no label");
  return labels;
}

int read_num_classes(const fs::path& file) {
  std::ifstream in = open_input(file);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(file.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("num_classes") || !j["num_classes"].is_number_integer()) {
    throw ParseError(file.string() + ": expected {\"num_classes\": <int>}");
  }
  const int c = j["num_classes"].get<int>();
  if (c < 1) throw ParseError(file.string() + ": num_classes must be >= 1");
  return c;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_output(const fs::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw Error(file.string() + ": cannot write");
  return out;
}

}  // namespace

Graph load_graph(const fs::path& dir) {
  const int num_classes = read_num_classes(dir / "meta.json");
  Tensor features = read_features(dir / "features.tsv");
  const std::size_t n = features.rows();
  Tensor adjacency = read_edges(dir / "edges.tsv", n);
  std::optional<std::vector<int>> labels;
  if (fs::exists(dir / "labels.tsv")) labels = read_labels(dir / "labels.tsv", n, num_classes);
  return Graph(std::move(adjacency), std::move(features), std::move(labels), num_classes);
}

void save_graph(const Graph& g, const fs::path& dir) {
  const Tensor& a = g.adjacency();
  for (double v : a.data())
    if (v != 0.0 && v != 1.0) throw ContractError("save_graph: edge weights must be 0 or 1");
  fs::create_directories(dir);
  {
    std::ofstream out = open_output(dir / "edges.tsv");
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = i + 1; j < a.cols(); ++j)
        if (a(i, j) != 0.0) out << i << '\t' << j << '\n';
  }
  {
    std::ofstream out = open_output(dir / "features.tsv");
    const Tensor& x = g.features();
    out << x.rows() << ' ' << x.cols() << '\n';
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) out << (j ? " " : "") << format_double(x(i, j));
      out << '\n';
    }
  }
  if (g.has_labels()) {
    std::ofstream out = open_output(dir / "labels.tsv");
    const auto labels = g.labels();
    for (std::size_t i = 0; i < labels.size(); ++i) out << i << '\t' << labels[i] << '\n';
  } else {
    fs::remove(dir / "labels.tsv");
  }
  std::ofstream out = open_output(dir / "meta.json");
  out << nlohmann::json{{"num_classes", g.num_classes()}}.dump() << '\n';
}

DomainPair load_pair(const fs::path& manifest) {
  std::ifstream in = open_input(manifest);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(manifest.string() + ": " + e.what());
  }
  for (const char* key : {"source", "target"}) {
    if (!j.is_object() || !j.contains(key) || !j[key].is_string()) {
      throw ParseError(manifest.string() + ": missing string field \"" + key + "\"");
    }
  }
  const fs::path base = manifest.parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  return DomainPair(load_graph(resolve(j["source"])), load_graph(resolve(j["target"])));
}

void save_pair(const DomainPair& pair, const fs::path& dir) {
  save_graph(pair.source, dir / "source");
  save_graph(pair.target, dir / "target");
  std::ofstream out = open_output(dir / "pair.json");
  out << nlohmann::json{{"source", "source"}, {"target", "target"}}.dump() << '\n';
}

// ---- synthetic generator ---------------------------------------------------------

void SbmSpec::validate() const {
  auto require = [](bool ok, const std::string& message) {
    if (!ok) throw ValidationError("sbm: " + message);
  };
  require(num_classes >= 1, "num_classes must be >= 1");
  require(feature_dim >= static_cast<std::size_t>(num_classes),
          "feature_dim must be >= num_classes (class means use one axis each)");
  require(shift >= 0.0 && std::isfinite(shift), "shift must be finite and >= 0");
  require(noise >= 0.0 && std::isfinite(noise), "noise must be finite and >= 0");
  require(std::isfinite(mean_scale), "mean_scale must be finite");
  for (const auto* d : {&source, &target}) {
    const std::string which = d == &source ? "source" : "target";
    require(0.0 <= d->p_out && d->p_out <= d->p_in && d->p_in <= 1.0,
            which + ": need 0 <= p_out <= p_in <= 1");
    require(d->n >= static_cast<std::size_t>(num_classes),
            which + ": n must be >= num_classes so no class is empty");
    if (!d->proportions.empty()) {
      require(d->proportions.size() == static_cast<std::size_t>(num_classes),
              which + ": one proportion per class");
      double total = 0.0;
      for (double p : d->proportions) {
        require(p > 0.0 && std::isfinite(p), which + ": proportions must be > 0");
        total += p;
      }
      require(std::abs(total - 1.0) < 1e-9, which + ": proportions must sum to 1");
    }
  }
}

std::vector<std::size_t> class_sizes(const SbmDomain& domain, int num_classes) {
  const auto c = static_cast<std::size_t>(num_classes);
  std::vector<double> props = domain.proportions;
  if (props.empty()) props.assign(c, 1.0 / static_cast<double>(c));
  std::vector<std::size_t> sizes(c);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t used = 0;
  for (std::size_t k = 0; k < c; ++k) {
    const double exact = props[k] * static_cast<double>(domain.n);
    sizes[k] = static_cast<std::size_t>(std::floor(exact));
    used += sizes[k];
    remainders.emplace_back(-(exact - std::floor(exact)), k);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t i = 0; used < domain.n; ++i, ++used) ++sizes[remainders[i % c].second];
  for (std::size_t k = 0; k < c; ++k)
    if (sizes[k] == 0) throw ValidationError("sbm: class " + std::to_string(k) + " would be empty");
  return sizes;
}

DomainPair generate_sbm_pair(const SbmSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto c = static_cast<std::size_t>(spec.num_classes);
  const std::size_t d = spec.feature_dim;

  Rng dir_rng(derive_seed(seed, 0x5b));
  std::vector<std::vector<double>> shift_dirs(c, std::vector<double>(d));
  for (auto& u : shift_dirs) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : u) {
        v = dir_rng.normal();
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& v : u) v /= norm;
  }

  auto build = [&](const SbmDomain& dom, bool is_target, std::uint64_t stream) {
    Rng rng(derive_seed(seed, stream));
    const auto sizes = class_sizes(dom, spec.num_classes);
    std::vector<int> labels;
    for (std::size_t k = 0; k < c; ++k) labels.insert(labels.end(), sizes[k], static_cast<int>(k));
    const std::size_t n = labels.size();
    Tensor a(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng.bernoulli(labels[i] == labels[j] ? dom.p_in : dom.p_out)) a(i, j) = a(j, i) = 1.0;
    Tensor x(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(labels[i]);
      for (std::size_t j = 0; j < d; ++j) {
        double mean = j == k ? spec.mean_scale : 0.0;
        if (is_target) mean += spec.shift * shift_dirs[k][j];
        x(i, j) = mean + spec.noise * rng.normal();
      }
    }
    return Graph(std::move(a), std::move(x), std::move(labels), spec.num_classes);
  };
  return DomainPair(build(spec.source, false, 0x50), build(spec.target, true, 0x7a));
}

}  // namespace sagda
