// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <limits>
#include <numeric>
#include <optional>

#include "latentrank/error.hpp"
#include "latentrank/prior_store.hpp"
#include "latentrank/rng.hpp"

namespace latentrank {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Assigns every item to its nearest centroid (lowest index on ties) and
// returns the within-cluster sum of squares.
double assign(const std::vector<EmbeddingRecord>& items,
              const std::vector<std::vector<double>>& centroids,
              std::vector<std::size_t>& assignment) {
  double wcss = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      const double d = squared_distance(items[i].embedding, centroids[c]);
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    assignment[i] = arg;
    wcss += best;
  }
  return wcss;
}

}  // namespace

KMeansResult kmeans_representatives(const std::vector<EmbeddingRecord>& items, std::size_t k,
                                    std::size_t max_iters, std::uint64_t seed,
                                    std::size_t latent_dim) {
  const std::size_t n = items.size();
  if (k == 0) fail(ErrorCode::Config, "K must be positive");
  if (k > n)
    fail(ErrorCode::Config, "K = " + std::to_string(k) + " exceeds the number of inputs (" +
                                std::to_string(n) + ")");
  const std::size_t e = items.front().embedding.size();
  if (e == 0) fail(ErrorCode::Domain, "embeddings must not be empty");
  for (const auto& it : items)
    if (it.embedding.size() != e) fail(ErrorCode::Domain, "embeddings have inconsistent dimensions");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  auto rng = make_stream(seed, StreamTag::KMeans, 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  KMeansResult res;
  for (std::size_t c = 0; c < k; ++c) res.centroids.push_back(items[perm[c]].embedding);
  res.assignment.assign(n, 0);
  res.wcss_history.push_back(assign(items, res.centroids, res.assignment));

  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    std::vector<std::vector<double>> sums(k, std::vector<double>(e, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[res.assignment[i]];
      for (std::size_t j = 0; j < e; ++j) s[j] += items[i].embedding[j];
      ++counts[res.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < e; ++j) res.centroids[c][j] = sums[c][j] / double(counts[c]);
    }
    const auto previous = res.assignment;
    res.wcss_history.push_back(assign(items, res.centroids, res.assignment));
    if (res.assignment == previous) break;
  }

  for (std::size_t c = 0; c < k; ++c) {
    double best = std::numeric_limits<double>::infinity();
    std::optional<std::size_t> arg;
    for (std::size_t i = 0; i < n; ++i) {
      if (res.assignment[i] != c) continue;
      const double d = squared_distance(items[i].embedding, res.centroids[c]);
      if (d < best) {
        best = d;
        arg = i;
      }
    }
    if (!arg) continue;
    const auto& item = items[*arg];
    res.representative_index.push_back(*arg);
    res.representatives.push_back(
        {item.id, item.text, item.embedding, LatentPoint(latent_dim, 0.0), kDefaultSigma});
  }
  return res;
}

}  // namespace latentrank
