#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sagda/graph.hpp"

namespace sagda {

// Graph directory layout:
//   edges.tsv     "u<TAB>v" per line, 0-indexed, each undirected edge once
//   features.tsv  header "n d", then n lines of d space-separated decimals
//   labels.tsv    optional, "node<TAB>label", every node exactly once
//   meta.json     {"num_classes": C}
// Parse failures throw ParseError with "file:line: ..." messages.
Graph load_graph(const std::filesystem::path& dir);
// Writes the layout above with 17 significant digits. The adjacency must be
// 0/1; weighted graphs throw ContractError. Labels are written when present.
void save_graph(const Graph& g, const std::filesystem::path& dir);

// pair.json: {"source": path, "target": path}; relative paths resolve against
// the manifest directory.
DomainPair load_pair(const std::filesystem::path& manifest);
// Writes dir/source, dir/target and dir/pair.json.
void save_pair(const DomainPair& pair, const std::filesystem::path& dir);

struct SbmDomain {
  std::size_t n = 200;
  std::vector<double> proportions;  // empty means balanced
  double p_in = 0.10;
  double p_out = 0.01;
};

struct SbmSpec {
  SbmDomain source{200, {}, 0.10, 0.01};
  SbmDomain target{200, {}, 0.06, 0.02};
  int num_classes = 3;
  std::size_t feature_dim = 16;
  double mean_scale = 1.0;  // class c has mean mean_scale * e_c
  double shift = 1.0;       // target mean offset delta along a unit direction u_c
  double noise = 0.5;       // feature noise standard deviation, both domains

  // Throws ValidationError naming the offending field.
  void validate() const;
};

// Class sizes from proportions by largest remainder; every class nonempty.
std::vector<std::size_t> class_sizes(const SbmDomain& domain, int num_classes);

// Nodes are laid out in contiguous class blocks. Features of class c are
// mean_scale * e_c (+ shift * u_c on the target) plus N(0, noise^2) noise;
// u_c is a random unit vector drawn per class from the seed. Both graphs keep
// their labels; target labels serve evaluation only.
DomainPair generate_sbm_pair(const SbmSpec& spec, std::uint64_t seed);

}  // namespace sagda
