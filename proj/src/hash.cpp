#include "sagda/hash.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <memory>

#include "sagda/error.hpp"

namespace sagda {

namespace {

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

std::string git_blob_hash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("git_blob_hash: SHA-1 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

std::string tensor_bytes(const Tensor& t) {
  std::string out;
  out.reserve(16 + 8 * t.size());
  append_u64(out, t.rows());
  append_u64(out, t.cols());
  for (double v : t.data()) append_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

std::string graph_content_hash(const Graph& g) {
  std::string bytes = "graph\n";
  bytes += tensor_bytes(g.adjacency());
  bytes += tensor_bytes(g.features());
  append_u64(bytes, static_cast<std::uint64_t>(g.num_classes()));
  if (g.has_labels()) {
    append_u64(bytes, g.labels().size());
    for (int l : g.labels()) append_u64(bytes, static_cast<std::uint64_t>(l));
  } else {
    bytes += "unlabeled";
  }
  return git_blob_hash(bytes);
}

std::string structure_hash(const Graph& g) {
  return git_blob_hash("adjacency\n" + tensor_bytes(g.adjacency()));
}

}  // namespace sagda
