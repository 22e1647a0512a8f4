#pragma once

#include <cmath>
#include <span>
#include <string>

#include <json.hpp>

#include "vlslice/clustering.hpp"
#include "vlslice/eval_harness.hpp"
#include "vlslice/slicing.hpp"
#include "vlslice/validation.hpp"

// Wire representations shared by the HTTP API and the CLI.

namespace vlslice::wire {

using nlohmann::json;

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json cluster_summary(const Cluster& c) {
  return {{"cluster_id", c.cluster_id}, {"size", c.size()},         {"mean_dc", c.mean_dc},
          {"var_dc", c.var_dc},         {"sample_ids", c.sample_ids}};
}

inline json cluster_detail(const Cluster& c, const AffinityProfile& profile) {
  auto j = cluster_summary(c);
  j["image_ids"] = c.image_ids;
  json dcs = json::array();
  for (auto p : c.positions) dcs.push_back(profile.delta_c[p]);
  j["delta_c"] = std::move(dcs);
  return j;
}

inline json filter(const RangeFilter& f) {
  return {{"attribute", to_string(f.attribute)}, {"min", number_or_null(f.min)}, {"max", number_or_null(f.max)}};
}

inline json view(const ClusterView& v, std::span<const Cluster> clusters) {
  json filters = json::array();
  for (const auto& f : v.filters) filters.push_back(filter(f));
  json listed = json::array();
  for (auto id : v.ordering) listed.push_back(cluster_summary(clusters[id]));
  return {{"sort", to_string(v.sort_key)}, {"filters", filters}, {"ordering", v.ordering}, {"clusters", listed}};
}

inline json histogram(const Histogram& h) {
  return {{"attribute", to_string(h.attribute)}, {"edges", h.edges}, {"counts", h.counts}};
}

inline json histograms(std::span<const Histogram> hs) {
  json out = json::array();
  for (const auto& h : hs) out.push_back(histogram(h));
  return out;
}

inline json slice(const Slice& s, const std::string& session_id) {
  return {{"slice_id", s.slice_id},
          {"session_id", session_id},
          {"name", s.name},
          {"image_ids", s.image_ids},
          {"size", s.image_ids.size()},
          {"mean_dc", s.mean_dc},
          {"var_dc", s.var_dc},
          {"version", s.version},
          {"created_at", iso8601_utc(s.created_at)},
          {"updated_at", iso8601_utc(s.updated_at)}};
}

inline json recommendation(const Recommendation& r, const Slice& s, std::span<const Cluster> clusters) {
  json items = json::array();
  for (std::size_t i = 0; i < r.cluster_ids.size(); ++i) {
    auto item = cluster_summary(clusters[r.cluster_ids[i]]);
    item["similarity"] = r.similarity[i];
    items.push_back(std::move(item));
  }
  return {{"slice_id", s.slice_id},
          {"slice_version", s.version},
          {"kind", to_string(r.kind)},
          {"status", to_string(r.status)},
          {"slice_mean_dc", s.mean_dc},
          {"clusters", items}};
}

inline json correlation(const CorrelationReport& r, const std::string& slice_id) {
  json points = json::array();
  for (const auto& p : r.points) {
    points.push_back({{"image_id", p.image_id}, {"similarity", p.similarity}, {"delta_c", p.delta_c},
                      {"in_slice", p.in_slice}});
  }
  return {{"slice_id", slice_id},
          {"n", r.n},
          {"fit_defined", r.fit_defined},
          {"slope", r.fit_defined ? json(r.slope) : json(nullptr)},
          {"intercept", r.fit_defined ? json(r.intercept) : json(nullptr)},
          {"pearson_r", r.pearson_r},
          {"points", points}};
}

}  // namespace vlslice::wire
