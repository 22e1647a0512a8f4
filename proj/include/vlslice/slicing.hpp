#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "vlslice/affinity.hpp"
#include "vlslice/clustering.hpp"
#include "vlslice/embedding_store.hpp"
#include "vlslice/errors.hpp"

namespace vlslice {

inline constexpr std::string_view kPlaceholderSliceName = "Untitled slice";
inline constexpr std::size_t kMaxRecommendations = 50;

/// Read-only view of the data a slice is defined against.
class SliceContext {
 public:
  SliceContext(const EmbeddingMatrix& m, const WorkingSet& ws, const AffinityProfile& profile)
      : matrix_(m), ws_(ws), profile_(profile) {
    position_.reserve(ws.k());
    for (std::size_t i = 0; i < ws.k(); ++i) position_.emplace(ws.image_ids[i], i);
  }

  const EmbeddingMatrix& matrix() const noexcept { return matrix_; }
  const WorkingSet& working_set() const noexcept { return ws_; }
  const AffinityProfile& profile() const noexcept { return profile_; }

  bool in_working_set(const std::string& id) const { return position_.contains(id); }

  std::size_t position(const std::string& id) const {
    auto it = position_.find(id);
    if (it == position_.end()) {
      fail(ErrorCode::invalid_argument, "image '" + id + "' is not in the working set", id);
    }
    return it->second;
  }

 private:
  const EmbeddingMatrix& matrix_;
  const WorkingSet& ws_;
  const AffinityProfile& profile_;
  std::unordered_map<std::string, std::size_t> position_;
};

struct Slice {
  std::string slice_id;
  std::string name;
  std::vector<std::string> image_ids;  // insertion order, unique
  Embedding centroid;                  // empty while the slice is empty
  double mean_dc = 0.0;
  double var_dc = 0.0;
  std::int64_t created_at = 0;  // unix milliseconds
  std::int64_t updated_at = 0;
  std::uint64_t version = 0;    // bumped on every mutation

  bool empty() const noexcept { return image_ids.empty(); }
  bool contains(const std::string& id) const {
    return std::find(image_ids.begin(), image_ids.end(), id) != image_ids.end();
  }
};

/// Recomputes centroid and delta_c statistics from the current members.
inline void refresh_statistics(Slice& slice, const SliceContext& ctx) {
  std::vector<std::size_t> rows;
  std::vector<double> dcs;
  rows.reserve(slice.image_ids.size());
  dcs.reserve(slice.image_ids.size());
  for (const auto& id : slice.image_ids) {
    const auto p = ctx.position(id);
    rows.push_back(ctx.working_set().rows[p]);
    dcs.push_back(ctx.profile().delta_c[p]);
  }
  slice.centroid = mean_direction(ctx.matrix(), rows);
  const auto mv = mean_and_variance(dcs);
  slice.mean_dc = mv.mean;
  slice.var_dc = mv.var;
}

inline Slice create_slice(const SliceContext& ctx, std::string slice_id, std::string name,
                          std::span<const std::string> seed_ids, std::int64_t now = 0) {
  Slice s;
  s.slice_id = std::move(slice_id);
  s.name = name.empty() ? std::string(kPlaceholderSliceName) : std::move(name);
  for (const auto& id : seed_ids) {
    ctx.position(id);
    if (!s.contains(id)) s.image_ids.push_back(id);
  }
  s.created_at = s.updated_at = now;
  refresh_statistics(s, ctx);
  return s;
}

/// Validates both lists against the current membership, then removes and adds.
/// Adding an existing member is a no-op.
inline void mutate_slice(Slice& slice, const SliceContext& ctx, std::span<const std::string> add,
                         std::span<const std::string> remove, std::int64_t now = 0,
                         std::optional<std::string> rename = std::nullopt) {
  for (const auto& id : add) ctx.position(id);
  for (const auto& id : remove) {
    if (!slice.contains(id)) {
      fail(ErrorCode::invalid_argument, "image '" + id + "' is not a member of slice " + slice.slice_id, id);
    }
  }
  const std::unordered_set<std::string> dropped(remove.begin(), remove.end());
  std::erase_if(slice.image_ids, [&](const std::string& id) { return dropped.contains(id); });
  for (const auto& id : add) {
    if (!slice.contains(id)) slice.image_ids.push_back(id);
  }
  if (rename) slice.name = rename->empty() ? std::string(kPlaceholderSliceName) : std::move(*rename);
  refresh_statistics(slice, ctx);
  slice.updated_at = now;
  ++slice.version;
}

enum class RecommendationKind { similar, counterfactual };

inline std::string_view to_string(RecommendationKind k) {
  return k == RecommendationKind::similar ? "similar" : "counterfactual";
}

inline RecommendationKind parse_recommendation_kind(std::string_view s) {
  if (s == "similar") return RecommendationKind::similar;
  if (s == "counterfactual") return RecommendationKind::counterfactual;
  fail(ErrorCode::invalid_argument, "unknown recommendation kind '" + std::string(s) + "'", std::string(s));
}

enum class RecommendationStatus { ok, no_sign };

inline std::string_view to_string(RecommendationStatus s) {
  return s == RecommendationStatus::ok ? "ok" : "no_sign";
}

struct Recommendation {
  RecommendationKind kind = RecommendationKind::similar;
  RecommendationStatus status = RecommendationStatus::ok;
  std::vector<std::size_t> cluster_ids;
  std::vector<double> similarity;  // parallel to cluster_ids
};

/// Clusters ranked by centroid cosine to the slice centroid, capped at 50.
/// Clusters holding any slice member are never returned. Counterfactuals keep
/// only clusters whose mean_dc has the strictly opposite sign of the slice's.
inline Recommendation recommend(const Slice& slice, std::span<const Cluster> clusters, RecommendationKind kind) {
  if (slice.empty()) {
    fail(ErrorCode::conflict, "slice " + slice.slice_id + " is empty; add images before requesting recommendations",
         slice.slice_id);
  }
  Recommendation rec;
  rec.kind = kind;
  if (kind == RecommendationKind::counterfactual && slice.mean_dc == 0.0) {
    rec.status = RecommendationStatus::no_sign;
    return rec;
  }
  const std::unordered_set<std::string> members(slice.image_ids.begin(), slice.image_ids.end());
  std::vector<std::pair<double, std::size_t>> ranked;
  for (const auto& c : clusters) {
    if (kind == RecommendationKind::counterfactual && !(c.mean_dc * slice.mean_dc < 0.0)) continue;
    const bool overlaps =
        std::any_of(c.image_ids.begin(), c.image_ids.end(), [&](const auto& id) { return members.contains(id); });
    if (overlaps) continue;
    ranked.emplace_back(cosine_similarity(slice.centroid, c.centroid), c.cluster_id);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second < y.second;
  });
  if (ranked.size() > kMaxRecommendations) ranked.resize(kMaxRecommendations);
  for (const auto& [sim, id] : ranked) {
    rec.cluster_ids.push_back(id);
    rec.similarity.push_back(sim);
  }
  return rec;
}

}  // namespace vlslice
