#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "vlslice/affinity.hpp"
#include "vlslice/embedding_store.hpp"
#include "vlslice/errors.hpp"
#include "vlslice/slicing.hpp"

namespace vlslice {

struct CorrelationPoint {
  std::string image_id;
  double similarity = 0.0;  // cosine to the slice centroid
  double delta_c = 0.0;
  bool in_slice = false;
};

/// Scatter of similarity-to-slice-centroid against delta_c over the whole
/// working set, with an OLS fit of delta_c on similarity.
struct CorrelationReport {
  std::vector<CorrelationPoint> points;
  bool fit_defined = false;  // false when every similarity is identical
  double slope = 0.0;
  double intercept = 0.0;
  double pearson_r = 0.0;
  std::size_t n = 0;
};

struct LinearFit {
  bool defined = false;
  double slope = 0.0;
  double intercept = 0.0;
  double r = 0.0;
};

/// Least-squares y = intercept + slope * x and Pearson r, using centered sums.
inline LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  LinearFit fit;
  const auto n = static_cast<double>(x.size());
  if (x.empty() || x.size() != y.size()) return fit;
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) return fit;
  fit.defined = true;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r = syy > 0.0 ? std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0) : 0.0;
  return fit;
}

inline CorrelationReport correlation_report(const Slice& slice, const WorkingSet& ws,
                                            const AffinityProfile& profile, const EmbeddingMatrix& m) {
  if (slice.empty()) {
    fail(ErrorCode::conflict, "slice " + slice.slice_id + " is empty; nothing to correlate against",
         slice.slice_id);
  }
  if (ws.k() == 0) fail(ErrorCode::invalid_argument, "working set is empty");
  const std::unordered_set<std::string> members(slice.image_ids.begin(), slice.image_ids.end());
  CorrelationReport report;
  report.n = ws.k();
  report.points.reserve(ws.k());
  std::vector<double> xs;
  std::vector<double> ys;
  xs.reserve(ws.k());
  ys.reserve(ws.k());
  for (std::size_t i = 0; i < ws.k(); ++i) {
    CorrelationPoint p;
    p.image_id = ws.image_ids[i];
    p.similarity = cosine_similarity(m.row(ws.rows[i]), slice.centroid);
    p.delta_c = profile.delta_c[i];
    p.in_slice = members.contains(p.image_id);
    xs.push_back(p.similarity);
    ys.push_back(p.delta_c);
    report.points.push_back(std::move(p));
  }
  const auto fit = fit_line(xs, ys);
  report.fit_defined = fit.defined;
  report.slope = fit.slope;
  report.intercept = fit.intercept;
  report.pearson_r = fit.r;
  return report;
}

/// The `top_m` images farthest from the fitted line (absolute residual),
/// largest first; equal residuals order by image id.
inline std::vector<std::string> outlier_candidates(const CorrelationReport& report, std::size_t top_m) {
  if (!report.fit_defined) fail(ErrorCode::conflict, "regression is degenerate; no residuals available");
  if (top_m == 0) fail(ErrorCode::invalid_argument, "top_m must be positive");
  std::vector<std::pair<double, const CorrelationPoint*>> residuals;
  residuals.reserve(report.points.size());
  for (const auto& p : report.points) {
    residuals.emplace_back(std::abs(p.delta_c - (report.intercept + report.slope * p.similarity)), &p);
  }
  const auto take = std::min(top_m, residuals.size());
  std::partial_sort(residuals.begin(), residuals.begin() + static_cast<std::ptrdiff_t>(take), residuals.end(),
                    [](const auto& x, const auto& y) {
                      if (x.first != y.first) return x.first > y.first;
                      return x.second->image_id < y.second->image_id;
                    });
  std::vector<std::string> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(residuals[i].second->image_id);
  return out;
}

}  // namespace vlslice
