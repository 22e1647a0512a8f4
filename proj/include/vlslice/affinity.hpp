#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vlslice/embedding_store.hpp"
#include "vlslice/errors.hpp"

namespace vlslice {

struct Query {
  std::string baseline;
  std::string augmented;
  std::size_t k = 3000;

  bool operator==(const Query&) const = default;
};

/// Per-image caption affinity over a working set. Every vector is indexed by
/// working-set position, so `delta_c[i]` belongs to `image_ids[i]`.
struct AffinityProfile {
  std::vector<std::string> image_ids;
  std::vector<double> s_b;
  std::vector<double> s_a;
  std::vector<double> p_b;
  std::vector<double> p_a;
  std::vector<double> delta_c;

  std::size_t size() const noexcept { return image_ids.size(); }
};

/// Cosine similarity between the caption embedding and each working-set image.
inline std::vector<double> caption_similarities(const EmbeddingMatrix& m, const WorkingSet& ws,
                                                std::span<const float> caption_embedding) {
  if (ws.rows.empty()) fail(ErrorCode::invalid_argument, "working set is empty");
  if (caption_embedding.size() != m.dim()) {
    fail(ErrorCode::dimension_mismatch, "caption embedding has dim " +
                                            std::to_string(caption_embedding.size()) +
                                            ", corpus has " + std::to_string(m.dim()));
  }
  std::vector<double> out;
  out.reserve(ws.rows.size());
  for (auto r : ws.rows) out.push_back(cosine_similarity(m.row(r), caption_embedding));
  return out;
}

/// Empirical percentile rank P_i = |{j : s_j <= s_i}| / n. Tied scores share
/// the largest rank of their group, so every value lies in [1/n, 1].
inline std::vector<double> percentile_ranks(std::span<const double> scores) {
  const std::size_t n = scores.size();
  if (n == 0) fail(ErrorCode::invalid_argument, "cannot rank an empty score list");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto at_most = std::upper_bound(sorted.begin(), sorted.end(), scores[i]) - sorted.begin();
    ranks[i] = static_cast<double>(at_most) / static_cast<double>(n);
  }
  return ranks;
}

/// Profile from already-computed similarity scores (one per working-set image).
inline AffinityProfile profile_from_scores(std::vector<std::string> image_ids,
                                           std::vector<double> s_b, std::vector<double> s_a) {
  if (s_b.size() != image_ids.size() || s_a.size() != image_ids.size()) {
    fail(ErrorCode::invalid_argument, "score vectors must match the working set size");
  }
  AffinityProfile p;
  p.p_b = percentile_ranks(s_b);
  p.p_a = percentile_ranks(s_a);
  p.delta_c.resize(p.p_b.size());
  for (std::size_t i = 0; i < p.delta_c.size(); ++i) p.delta_c[i] = p.p_a[i] - p.p_b[i];
  p.image_ids = std::move(image_ids);
  p.s_b = std::move(s_b);
  p.s_a = std::move(s_a);
  return p;
}

/// Change in augmented-caption percentile for every working-set image.
inline AffinityProfile delta_c(const EmbeddingMatrix& m, const WorkingSet& ws,
                               std::span<const float> baseline_embedding,
                               std::span<const float> augmented_embedding) {
  auto s_b = caption_similarities(m, ws, baseline_embedding);
  auto s_a = caption_similarities(m, ws, augmented_embedding);
  return profile_from_scores(ws.image_ids, std::move(s_b), std::move(s_a));
}

}  // namespace vlslice
