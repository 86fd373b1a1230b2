// SPDX-License-Identifier: Apache-2.0
//
// Representative conditions paired with their optimized latents. A query
// embedding picks the entry of maximal cosine similarity; new latents are
// drawn from N(z**, sigma^2 I) around that entry.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "latentrank/ranking_core.hpp"

namespace latentrank {

using Embedding = std::vector<double>;

inline constexpr int kStoreFormatVersion = 1;
inline constexpr std::size_t kDefaultEmbeddingDim = 768;
inline constexpr double kDefaultSigma = 0.2;
inline constexpr std::size_t kDefaultRepresentatives = 5;

struct RepresentativeEntry {
  std::string id;
  std::string text;
  Embedding embedding;
  LatentPoint z_star_star;  // all zeros until an optimum is attached
  double sigma = kDefaultSigma;

  bool operator==(const RepresentativeEntry&) const = default;
};

// One line of an embedding ingestion file.
struct EmbeddingRecord {
  std::string id;
  std::string text;
  Embedding embedding;
};

double cosine_similarity(std::span<const double> a, std::span<const double> b);

class PriorStore {
 public:
  PriorStore(std::size_t latent_dim, std::size_t embedding_dim);

  std::size_t latent_dim() const noexcept { return latent_dim_; }
  std::size_t embedding_dim() const noexcept { return embedding_dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<RepresentativeEntry>& entries() const noexcept { return entries_; }
  const RepresentativeEntry& entry(std::size_t index) const { return entries_.at(index); }

  // Throws Error(Lookup) for an unknown id.
  std::size_t index_of(std::string_view id) const;
  std::optional<std::size_t> find(std::string_view id) const;

  // Appends an entry; an empty z** becomes the zero vector.
  void add(RepresentativeEntry entry);
  void remove(std::string_view id);

  // Binds an optimized latent (and sigma) to an existing entry.
  void attach_optimum(std::string_view id, const LatentPoint& z_star_star, double sigma);

  // Index of the entry with maximal cosine similarity; ties go to the lowest
  // index. Throws Lookup on an empty store, Domain on a zero-norm or
  // wrong-length query.
  std::size_t select_prior(std::span<const double> query) const;

  nlohmann::json to_json() const;
  static PriorStore from_json(const nlohmann::json& j);
  std::string serialize() const;  // pretty JSON plus trailing newline
  void save(const std::filesystem::path& path) const;
  static PriorStore load(const std::filesystem::path& path);

 private:
  void check_entry(const RepresentativeEntry& e) const;

  std::size_t latent_dim_;
  std::size_t embedding_dim_;
  std::vector<RepresentativeEntry> entries_;
};

// z** + sigma * eps, eps ~ N(0, I).
LatentPoint sample_latent(const RepresentativeEntry& entry, std::mt19937_64& rng);

// Deterministic, non-semantic text embedding for tests and demos: signed
// hashing of character trigrams (lowercased, space padded) into `dim`
// buckets, then L2 normalization. Throws Domain on empty text.
Embedding toy_embed(std::string_view text, std::size_t dim = kDefaultEmbeddingDim,
                    std::uint64_t seed = 0);

// JSON lines {id, text, embedding}. Records without an embedding are
// embedded with toy_embed(text, embed_dim) when embed_dim > 0.
std::vector<EmbeddingRecord> parse_embedding_records(std::string_view jsonl,
                                                     std::size_t embed_dim = 0);
std::vector<EmbeddingRecord> read_embedding_records(const std::filesystem::path& path,
                                                    std::size_t embed_dim = 0);

struct KMeansResult {
  std::vector<RepresentativeEntry> representatives;  // no optimum attached yet
  std::vector<std::size_t> representative_index;     // index into the input
  std::vector<std::size_t> assignment;               // cluster of each input
  std::vector<std::vector<double>> centroids;
  std::vector<double> wcss_history;  // after initialization and after each iteration
};

// Lloyd iterations on the raw embeddings (Euclidean) from K distinct seeded
// random inputs. Each cluster is represented by its member nearest the
// centroid; representatives are ordered by cluster index. Empty clusters keep
// their previous centroid and contribute no representative.
KMeansResult kmeans_representatives(const std::vector<EmbeddingRecord>& items, std::size_t k,
                                    std::size_t max_iters, std::uint64_t seed,
                                    std::size_t latent_dim);

}  // namespace latentrank
