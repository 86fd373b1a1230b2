// SPDX-License-Identifier: Apache-2.0
#include "latentrank/prior_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "latentrank/error.hpp"
#include "latentrank/rng.hpp"

namespace latentrank {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::Domain, "cosine similarity of unequal lengths");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) fail(ErrorCode::Domain, "cosine similarity of a zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

PriorStore::PriorStore(std::size_t latent_dim, std::size_t embedding_dim)
    : latent_dim_(latent_dim), embedding_dim_(embedding_dim) {
  if (latent_dim == 0 || embedding_dim == 0)
    fail(ErrorCode::Config, "store dimensions must be positive");
}

std::optional<std::size_t> PriorStore::find(std::string_view id) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].id == id) return i;
  return std::nullopt;
}

std::size_t PriorStore::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  fail(ErrorCode::Lookup, "no store entry with id '" + std::string(id) + "'");
}

void PriorStore::check_entry(const RepresentativeEntry& e) const {
  if (e.id.empty()) fail(ErrorCode::Domain, "entry id must not be empty");
  if (e.embedding.size() != embedding_dim_)
    fail(ErrorCode::Domain, "entry '" + e.id + "' embedding has dimension " +
                                std::to_string(e.embedding.size()) + ", store expects " +
                                std::to_string(embedding_dim_));
  if (e.z_star_star.size() != latent_dim_)
    fail(ErrorCode::Domain, "entry '" + e.id + "' latent has dimension " +
                                std::to_string(e.z_star_star.size()) + ", store expects " +
                                std::to_string(latent_dim_));
  if (!(e.sigma > 0.0) || !std::isfinite(e.sigma))
    fail(ErrorCode::Domain, "entry '" + e.id + "' sigma must be positive");
  double norm = 0.0;
  for (double v : e.embedding) {
    if (!std::isfinite(v)) fail(ErrorCode::Domain, "entry '" + e.id + "' embedding not finite");
    norm += v * v;
  }
  if (norm == 0.0) fail(ErrorCode::Domain, "entry '" + e.id + "' embedding has zero norm");
  for (double v : e.z_star_star)
    if (!std::isfinite(v)) fail(ErrorCode::Domain, "entry '" + e.id + "' latent not finite");
}

void PriorStore::add(RepresentativeEntry entry) {
  if (entry.z_star_star.empty()) entry.z_star_star.assign(latent_dim_, 0.0);
  check_entry(entry);
  if (find(entry.id)) fail(ErrorCode::Config, "duplicate entry id '" + entry.id + "'");
  entries_.push_back(std::move(entry));
}

void PriorStore::remove(std::string_view id) {
  entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(index_of(id)));
}

void PriorStore::attach_optimum(std::string_view id, const LatentPoint& z_star_star,
                                double sigma) {
  auto& e = entries_[index_of(id)];
  RepresentativeEntry updated = e;
  updated.z_star_star = z_star_star;
  updated.sigma = sigma;
  check_entry(updated);
  e = std::move(updated);
}

std::size_t PriorStore::select_prior(std::span<const double> query) const {
  if (entries_.empty()) fail(ErrorCode::Lookup, "prior store is empty");
  if (query.size() != embedding_dim_)
    fail(ErrorCode::Domain, "query embedding has dimension " + std::to_string(query.size()) +
                                ", store expects " + std::to_string(embedding_dim_));
  double qn = 0.0;
  for (double v : query) qn += v * v;
  if (qn == 0.0 || !std::isfinite(qn)) fail(ErrorCode::Domain, "query embedding has zero norm");

  std::size_t best = 0;
  double best_sim = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const double s = cosine_similarity(query, entries_[i].embedding);
    if (s > best_sim) {
      best_sim = s;
      best = i;
    }
  }
  return best;
}

nlohmann::json PriorStore::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : entries_)
    entries.push_back({{"id", e.id},
                       {"text", e.text},
                       {"embedding", e.embedding},
                       {"z_star_star", e.z_star_star},
                       {"sigma", e.sigma}});
  return {{"format_version", kStoreFormatVersion},
          {"latent_dim", latent_dim_},
          {"embedding_dim", embedding_dim_},
          {"entries", std::move(entries)}};
}

PriorStore PriorStore::from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kStoreFormatVersion)
      fail(ErrorCode::Parse, "unsupported store format_version " + std::to_string(version));
    PriorStore store(j.at("latent_dim").get<std::size_t>(), j.at("embedding_dim").get<std::size_t>());
    for (const auto& e : j.at("entries")) {
      RepresentativeEntry entry;
      entry.id = e.at("id").get<std::string>();
      entry.text = e.value("text", std::string{});
      entry.embedding = e.at("embedding").get<Embedding>();
      if (e.contains("z_star_star") && !e.at("z_star_star").is_null())
        entry.z_star_star = e.at("z_star_star").get<LatentPoint>();
      entry.sigma = e.value("sigma", kDefaultSigma);
      store.add(std::move(entry));
    }
    return store;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("bad store document: ") + e.what());
  }
}

std::string PriorStore::serialize() const { return to_json().dump(2) + '\n'; }

void PriorStore::save(const std::filesystem::path& path) const {
  // Write-then-rename so readers never observe a half-written store.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write store " + tmp.string());
    out << serialize();
    if (!out) fail(ErrorCode::Io, "failed writing store " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::Io, "cannot replace store " + path.string() + ": " + ec.message());
}

PriorStore PriorStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open store " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, "store " + path.string() + " is not JSON: " + e.what());
  }
  return from_json(j);
}

LatentPoint sample_latent(const RepresentativeEntry& entry, std::mt19937_64& rng) {
  LatentPoint z = entry.z_star_star;
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : z) v += entry.sigma * dist(rng);
  return z;
}

}  // namespace latentrank
