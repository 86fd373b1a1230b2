// SPDX-License-Identifier: Apache-2.0
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "latentrank/error.hpp"
#include "latentrank/prior_store.hpp"
#include "latentrank/rng.hpp"

namespace latentrank {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ splitmix64(seed);
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h);
}

}  // namespace

Embedding toy_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) fail(ErrorCode::Domain, "embedding dimension must be positive");
  if (text.empty()) fail(ErrorCode::Domain, "cannot embed empty text");

  std::string padded = "  ";
  for (unsigned char ch : text) padded += static_cast<char>(std::tolower(ch));
  padded += ' ';

  Embedding e(dim, 0.0);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    const std::uint64_t h = fnv1a(std::string_view(padded).substr(i, 3), seed);
    e[h % dim] += (h >> 63) ? -1.0 : 1.0;
  }
  double norm = 0.0;
  for (double v : e) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    // Every trigram cancelled; fall back to a single hashed bucket.
    e[fnv1a(text, seed) % dim] = 1.0;
    return e;
  }
  for (double& v : e) v /= norm;
  return e;
}

std::vector<EmbeddingRecord> parse_embedding_records(std::string_view jsonl,
                                                     std::size_t embed_dim) {
  std::vector<EmbeddingRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    std::size_t nl = jsonl.find('\n', pos);
    if (nl == std::string_view::npos) nl = jsonl.size();
    const std::string_view line = jsonl.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      EmbeddingRecord r;
      r.text = j.value("text", std::string{});
      r.id = j.value("id", "item-" + std::to_string(out.size()));
      if (j.contains("embedding")) {
        r.embedding = j.at("embedding").get<Embedding>();
      } else if (embed_dim > 0) {
        r.embedding = toy_embed(r.text, embed_dim);
      } else {
        fail(ErrorCode::Parse, "line " + std::to_string(line_no) + " has no embedding");
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::Parse, "embedding file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<EmbeddingRecord> read_embedding_records(const std::filesystem::path& path,
                                                    std::size_t embed_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_embedding_records(buf.str(), embed_dim);
}

}  // namespace latentrank
