#pragma once

#include <string>
#include <string_view>

#include "sagda/graph.hpp"

namespace sagda {

// SHA-1 of "blob <len>\0" + content, as lowercase hex (git object id).
std::string git_blob_hash(std::string_view content);

// Canonical byte image of a tensor: shape header then raw little-endian f64.
std::string tensor_bytes(const Tensor& t);

// Hash over adjacency, features, labels, and class count.
std::string graph_content_hash(const Graph& g);
// Hash over the adjacency only; keys structure-derived caches.
std::string structure_hash(const Graph& g);

}  // namespace sagda
