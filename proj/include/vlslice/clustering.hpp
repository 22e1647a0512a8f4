#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "vlslice/affinity.hpp"
#include "vlslice/embedding_store.hpp"
#include "vlslice/errors.hpp"

namespace vlslice {

struct ClusteringConfig {
  double a = 0.95;   // weight of visual distance vs. delta_c consistency
  double dt = 0.2;   // merging stops once the closest pair is farther than this

  void validate() const {
    if (!(a >= 0.0 && a <= 1.0)) fail(ErrorCode::invalid_argument, "blend weight a must lie in [0, 1]");
    if (!(dt > 0.0)) fail(ErrorCode::invalid_argument, "distance threshold dt must be positive");
  }
};

inline constexpr std::size_t kSampleImages = 9;

struct Cluster {
  std::size_t cluster_id = 0;
  std::vector<std::string> image_ids;  // working-set order
  std::vector<std::size_t> positions;  // working-set positions of image_ids
  Embedding centroid;
  double mean_dc = 0.0;
  double var_dc = 0.0;
  std::vector<std::string> sample_ids;  // up to kSampleImages nearest the centroid

  std::size_t size() const noexcept { return image_ids.size(); }
};

// ---------------------------------------------------------------------------
// Shared statistics helpers (also used for slices).

/// Mean of unit embeddings, renormalized. A mean that cancels to (numerically)
/// zero falls back to the first row so the result stays a unit vector.
inline Embedding mean_direction(const EmbeddingMatrix& m, std::span<const std::size_t> rows) {
  if (rows.empty()) return {};
  std::vector<double> acc(m.dim(), 0.0);
  for (auto r : rows) {
    auto v = m.row(r);
    for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += v[d];
  }
  double sq = 0.0;
  for (double& x : acc) {
    x /= static_cast<double>(rows.size());
    sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm < 1e-9) {
    auto first = m.row(rows.front());
    return {first.begin(), first.end()};
  }
  Embedding out(acc.size());
  for (std::size_t d = 0; d < acc.size(); ++d) out[d] = static_cast<float>(acc[d] / norm);
  return out;
}

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;
};

/// Population mean and variance (two-pass).
inline MeanVar mean_and_variance(std::span<const double> values) {
  MeanVar mv;
  if (values.empty()) return mv;
  for (double v : values) mv.mean += v;
  mv.mean /= static_cast<double>(values.size());
  for (double v : values) mv.var += (v - mv.mean) * (v - mv.mean);
  mv.var /= static_cast<double>(values.size());
  return mv;
}

// ---------------------------------------------------------------------------

/// Blended linkage distance between working-set positions i and j:
/// a * (1 - cos) + (1 - a) * |dc_i - dc_j|.
inline double pairwise_distance(std::size_t i, std::size_t j, const WorkingSet& ws,
                                const AffinityProfile& profile, const EmbeddingMatrix& m,
                                const ClusteringConfig& cfg) {
  if (i >= ws.k() || j >= ws.k()) fail(ErrorCode::not_found, "working-set position out of range");
  if (i == j) return 0.0;
  const double visual = 1.0 - cosine_similarity(m.row(ws.rows[i]), m.row(ws.rows[j]));
  const double consistency = std::abs(profile.delta_c[i] - profile.delta_c[j]);
  return cfg.a * visual + (1.0 - cfg.a) * consistency;
}

inline std::size_t working_set_position(const WorkingSet& ws, const std::string& id) {
  auto it = std::find(ws.image_ids.begin(), ws.image_ids.end(), id);
  if (it == ws.image_ids.end()) fail(ErrorCode::not_found, "image '" + id + "' is not in the working set", id);
  return static_cast<std::size_t>(it - ws.image_ids.begin());
}

inline double pairwise_distance(const std::string& i, const std::string& j, const WorkingSet& ws,
                                const AffinityProfile& profile, const EmbeddingMatrix& m,
                                const ClusteringConfig& cfg) {
  return pairwise_distance(working_set_position(ws, i), working_set_position(ws, j), ws, profile, m, cfg);
}

namespace detail {

// Upper-triangular (i < j) storage for an n x n symmetric matrix.
class CondensedMatrix {
 public:
  explicit CondensedMatrix(std::size_t n) : n_(n), values_(n * (n - 1) / 2, 0.0) {}

  double& at(std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    return values_[i * n_ - i * (i + 1) / 2 + (j - i - 1)];
  }

 private:
  std::size_t n_;
  std::vector<double> values_;
};

inline Cluster make_cluster(std::size_t id, std::vector<std::size_t> positions, const WorkingSet& ws,
                            const AffinityProfile& profile, const EmbeddingMatrix& m) {
  std::sort(positions.begin(), positions.end());
  Cluster c;
  c.cluster_id = id;
  std::vector<std::size_t> rows;
  std::vector<double> dcs;
  rows.reserve(positions.size());
  dcs.reserve(positions.size());
  for (auto p : positions) {
    c.image_ids.push_back(ws.image_ids[p]);
    rows.push_back(ws.rows[p]);
    dcs.push_back(profile.delta_c[p]);
  }
  c.positions = std::move(positions);
  c.centroid = mean_direction(m, rows);
  const auto mv = mean_and_variance(dcs);
  c.mean_dc = mv.mean;
  c.var_dc = mv.var;

  std::vector<std::pair<double, std::size_t>> nearest;
  nearest.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    nearest.emplace_back(cosine_similarity(m.row(rows[i]), c.centroid), i);
  }
  const auto take = std::min(kSampleImages, nearest.size());
  std::partial_sort(nearest.begin(), nearest.begin() + static_cast<std::ptrdiff_t>(take), nearest.end(),
                    [&](const auto& x, const auto& y) {
                      if (x.first != y.first) return x.first > y.first;
                      return c.image_ids[x.second] < c.image_ids[y.second];
                    });
  for (std::size_t i = 0; i < take; ++i) c.sample_ids.push_back(c.image_ids[nearest[i].second]);
  return c;
}

}  // namespace detail

/// Average-linkage agglomerative clustering of the working set.
///
/// Starts from singletons and repeatedly merges the pair of clusters whose
/// mean pairwise distance is smallest, stopping once that minimum exceeds
/// `cfg.dt`. A cluster is identified by its smallest working-set position;
/// equal-distance candidates resolve to the lexicographically smallest
/// (lower id, higher id) pair. Linkage is kept exact by tracking the *sum* of
/// member distances between clusters, which is additive under merges.
///
/// Returned clusters are numbered 0..m-1 in order of their first member.
inline std::vector<Cluster> agglomerate(const WorkingSet& ws, const AffinityProfile& profile,
                                        const EmbeddingMatrix& m, const ClusteringConfig& cfg) {
  cfg.validate();
  const std::size_t n = ws.k();
  if (n == 0) fail(ErrorCode::invalid_argument, "working set is empty");
  if (profile.size() != n) fail(ErrorCode::invalid_argument, "profile does not match working set");

  constexpr double kInf = std::numeric_limits<double>::infinity();
  detail::CondensedMatrix sums(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) sums.at(i, j) = pairwise_distance(i, j, ws, profile, m, cfg);
  }

  std::vector<std::size_t> size(n, 1);
  std::vector<bool> active(n, true);
  std::vector<std::vector<std::size_t>> members(n);
  for (std::size_t i = 0; i < n; ++i) members[i] = {i};

  auto linkage = [&](std::size_t i, std::size_t j) {
    return sums.at(i, j) / (static_cast<double>(size[i]) * static_cast<double>(size[j]));
  };

  // nn[i]: closest active cluster with a larger id; nn_dist[i] its linkage.
  std::vector<std::size_t> nn(n, n);
  std::vector<double> nn_dist(n, kInf);
  auto refresh = [&](std::size_t i) {
    nn[i] = n;
    nn_dist[i] = kInf;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!active[j]) continue;
      const double d = linkage(i, j);
      if (d < nn_dist[i]) {
        nn_dist[i] = d;
        nn[i] = j;
      }
    }
  };
  for (std::size_t i = 0; i < n; ++i) refresh(i);

  for (;;) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i] && nn[i] != n && (best == n || nn_dist[i] < nn_dist[best])) best = i;
    }
    if (best == n || nn_dist[best] > cfg.dt) break;

    const std::size_t keep = best;
    const std::size_t gone = nn[best];
    for (std::size_t k = 0; k < n; ++k) {
      if (active[k] && k != keep && k != gone) sums.at(keep, k) += sums.at(gone, k);
    }
    size[keep] += size[gone];
    active[gone] = false;
    members[keep].insert(members[keep].end(), members[gone].begin(), members[gone].end());
    members[gone].clear();

    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == keep) continue;
      if (nn[k] == keep || nn[k] == gone) {
        refresh(k);
      } else if (k < keep) {
        const double d = linkage(k, keep);
        if (d < nn_dist[k] || (d == nn_dist[k] && keep < nn[k])) {
          nn_dist[k] = d;
          nn[k] = keep;
        }
      }
    }
    refresh(keep);
  }

  std::vector<Cluster> clusters;
  for (std::size_t i = 0; i < n; ++i) {
    if (!active[i]) continue;
    clusters.push_back(detail::make_cluster(clusters.size(), std::move(members[i]), ws, profile, m));
  }
  return clusters;
}

/// image id -> cluster_id for a partition.
inline std::unordered_map<std::string, std::size_t> cluster_membership(std::span<const Cluster> clusters) {
  std::unordered_map<std::string, std::size_t> out;
  for (const auto& c : clusters) {
    for (const auto& id : c.image_ids) out.emplace(id, c.cluster_id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exploration: sorting, filtering, text search, histograms.

enum class ClusterAttribute { size, mean_dc, var_dc };

inline std::string_view to_string(ClusterAttribute a) {
  switch (a) {
    case ClusterAttribute::size: return "size";
    case ClusterAttribute::mean_dc: return "mean_dc";
    case ClusterAttribute::var_dc: return "var_dc";
  }
  return "size";
}

inline ClusterAttribute parse_attribute(std::string_view name) {
  if (name == "size") return ClusterAttribute::size;
  if (name == "mean_dc") return ClusterAttribute::mean_dc;
  if (name == "var_dc") return ClusterAttribute::var_dc;
  fail(ErrorCode::invalid_argument, "unknown cluster attribute '" + std::string(name) + "'", std::string(name));
}

inline double attribute_value(const Cluster& c, ClusterAttribute a) {
  switch (a) {
    case ClusterAttribute::size: return static_cast<double>(c.size());
    case ClusterAttribute::mean_dc: return c.mean_dc;
    case ClusterAttribute::var_dc: return c.var_dc;
  }
  return 0.0;
}

enum class SortKey { mean_dc_desc, mean_dc_asc, size, var_dc, text_relevance };

inline std::string_view to_string(SortKey k) {
  switch (k) {
    case SortKey::mean_dc_desc: return "mean_dc_desc";
    case SortKey::mean_dc_asc: return "mean_dc_asc";
    case SortKey::size: return "size";
    case SortKey::var_dc: return "var_dc";
    case SortKey::text_relevance: return "text_relevance";
  }
  return "mean_dc_desc";
}

inline SortKey parse_sort_key(std::string_view name) {
  if (name.empty() || name == "mean_dc_desc") return SortKey::mean_dc_desc;
  if (name == "mean_dc_asc") return SortKey::mean_dc_asc;
  if (name == "size") return SortKey::size;
  if (name == "var_dc") return SortKey::var_dc;
  if (name == "text_relevance") return SortKey::text_relevance;
  fail(ErrorCode::invalid_argument, "unknown sort key '" + std::string(name) + "'", std::string(name));
}

struct ClusterScore {
  std::size_t cluster_id = 0;
  double score = 0.0;
};

/// Clusters ranked by mean member similarity to the text embedding, descending.
inline std::vector<ClusterScore> rerank_by_text(std::span<const Cluster> clusters, const EmbeddingMatrix& m,
                                                std::span<const float> text_embedding) {
  if (clusters.empty()) fail(ErrorCode::invalid_argument, "no clusters to rank");
  if (text_embedding.size() != m.dim()) {
    fail(ErrorCode::dimension_mismatch, "text embedding has dim " + std::to_string(text_embedding.size()) +
                                            ", corpus has " + std::to_string(m.dim()));
  }
  std::vector<ClusterScore> scores;
  scores.reserve(clusters.size());
  for (const auto& c : clusters) {
    double total = 0.0;
    for (const auto& id : c.image_ids) total += cosine_similarity(m.embedding(id), text_embedding);
    scores.push_back({c.cluster_id, total / static_cast<double>(c.size())});
  }
  std::stable_sort(scores.begin(), scores.end(), [](const auto& x, const auto& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.cluster_id < y.cluster_id;
  });
  return scores;
}

/// Cluster ids ordered by `key`; ties fall back to ascending cluster_id.
/// `text_scores` is required for SortKey::text_relevance.
inline std::vector<std::size_t> sort_clusters(std::span<const Cluster> clusters, SortKey key,
                                              std::span<const ClusterScore> text_scores = {}) {
  std::vector<std::size_t> order;
  if (key == SortKey::text_relevance) {
    if (text_scores.empty()) fail(ErrorCode::invalid_argument, "text_relevance ordering requires a text search");
    for (const auto& s : text_scores) order.push_back(s.cluster_id);
    return order;
  }
  std::vector<const Cluster*> sorted;
  for (const auto& c : clusters) sorted.push_back(&c);
  auto by = [key](const Cluster* x, const Cluster* y) {
    switch (key) {
      case SortKey::mean_dc_desc:
        if (x->mean_dc != y->mean_dc) return x->mean_dc > y->mean_dc;
        break;
      case SortKey::mean_dc_asc:
        if (x->mean_dc != y->mean_dc) return x->mean_dc < y->mean_dc;
        break;
      case SortKey::size:
        if (x->size() != y->size()) return x->size() > y->size();
        break;
      case SortKey::var_dc:
        if (x->var_dc != y->var_dc) return x->var_dc < y->var_dc;
        break;
      case SortKey::text_relevance:
        break;
    }
    return x->cluster_id < y->cluster_id;
  };
  std::sort(sorted.begin(), sorted.end(), by);
  for (const auto* c : sorted) order.push_back(c->cluster_id);
  return order;
}

struct RangeFilter {
  ClusterAttribute attribute = ClusterAttribute::size;
  double min = -std::numeric_limits<double>::infinity();
  double max = std::numeric_limits<double>::infinity();

  bool accepts(const Cluster& c) const {
    const double v = attribute_value(c, attribute);
    return v >= min && v <= max;
  }
};

inline void validate_filters(std::span<const RangeFilter> filters) {
  for (const auto& f : filters) {
    if (std::isnan(f.min) || std::isnan(f.max) || f.min > f.max) {
      fail(ErrorCode::invalid_argument, "inverted range for " + std::string(to_string(f.attribute)),
           std::string(to_string(f.attribute)));
    }
  }
}

/// Ids of clusters satisfying every filter, in input order.
inline std::vector<std::size_t> filter_clusters(std::span<const Cluster> clusters,
                                                std::span<const RangeFilter> filters) {
  validate_filters(filters);
  std::vector<std::size_t> kept;
  for (const auto& c : clusters) {
    if (std::all_of(filters.begin(), filters.end(), [&](const auto& f) { return f.accepts(c); })) {
      kept.push_back(c.cluster_id);
    }
  }
  return kept;
}

/// Parses "attr:min:max[,attr:min:max...]"; "inf"/"-inf" are accepted bounds
/// and an empty bound means unbounded.
inline std::vector<RangeFilter> parse_filters(std::string_view text) {
  std::vector<RangeFilter> filters;
  auto parse_bound = [](std::string_view s, double unbounded) {
    if (s.empty()) return unbounded;
    try {
      std::size_t used = 0;
      const double v = std::stod(std::string(s), &used);
      if (used != s.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      fail(ErrorCode::invalid_argument, "bad filter bound '" + std::string(s) + "'");
    }
  };
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    if (item.empty()) continue;
    const auto c1 = item.find(':');
    const auto c2 = c1 == std::string_view::npos ? c1 : item.find(':', c1 + 1);
    if (c2 == std::string_view::npos) {
      fail(ErrorCode::invalid_argument, "filter '" + std::string(item) + "' is not attr:min:max");
    }
    RangeFilter f;
    f.attribute = parse_attribute(item.substr(0, c1));
    f.min = parse_bound(item.substr(c1 + 1, c2 - c1 - 1), -std::numeric_limits<double>::infinity());
    f.max = parse_bound(item.substr(c2 + 1), std::numeric_limits<double>::infinity());
    filters.push_back(f);
  }
  validate_filters(filters);
  return filters;
}

struct Histogram {
  ClusterAttribute attribute = ClusterAttribute::size;
  std::vector<double> edges;  // bins + 1 entries
  std::vector<std::size_t> counts;
};

/// Uniform-bin histograms of size, mean_dc and var_dc over [min, max] of each.
/// The last bin is closed; a zero-width range puts every cluster in bin 0.
inline std::vector<Histogram> attribute_histograms(std::span<const Cluster> clusters, std::size_t bins = 20) {
  if (bins == 0) fail(ErrorCode::invalid_argument, "histogram needs at least one bin");
  std::vector<Histogram> out;
  if (clusters.empty()) return out;
  for (auto attr : {ClusterAttribute::size, ClusterAttribute::mean_dc, ClusterAttribute::var_dc}) {
    Histogram h;
    h.attribute = attr;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& c : clusters) {
      lo = std::min(lo, attribute_value(c, attr));
      hi = std::max(hi, attribute_value(c, attr));
    }
    const double width = hi - lo;
    h.edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) {
      h.edges[b] = b == bins ? hi : lo + width * static_cast<double>(b) / static_cast<double>(bins);
    }
    h.counts.assign(bins, 0);
    for (const auto& c : clusters) {
      std::size_t bin = 0;
      if (width > 0.0) {
        const double t = (attribute_value(c, attr) - lo) / width;
        bin = std::min(bins - 1, static_cast<std::size_t>(t * static_cast<double>(bins)));
      }
      ++h.counts[bin];
    }
    out.push_back(std::move(h));
  }
  return out;
}

struct ClusterView {
  std::vector<std::size_t> ordering;
  SortKey sort_key = SortKey::mean_dc_desc;
  std::vector<RangeFilter> filters;
};

/// Sorted ordering restricted to clusters that pass every filter.
inline ClusterView make_view(std::span<const Cluster> clusters, SortKey key, std::vector<RangeFilter> filters,
                             std::span<const ClusterScore> text_scores = {}) {
  const auto kept = filter_clusters(clusters, filters);
  const std::unordered_set<std::size_t> pass(kept.begin(), kept.end());
  ClusterView view;
  view.sort_key = key;
  view.filters = std::move(filters);
  for (auto id : sort_clusters(clusters, key, text_scores)) {
    if (pass.contains(id)) view.ordering.push_back(id);
  }
  return view;
}

}  // namespace vlslice
