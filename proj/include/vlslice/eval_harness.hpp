#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "vlslice/affinity.hpp"
#include "vlslice/clustering.hpp"
#include "vlslice/embedding_store.hpp"
#include "vlslice/errors.hpp"
#include "vlslice/random.hpp"
#include "vlslice/slicing.hpp"
#include "vlslice/version.hpp"

// Slice-quality measurement: session snapshots, the coherency (outlier
// detection) and representativeness (missed image) annotation tasks, and
// F1 scoring of annotator answers.

namespace vlslice {

inline constexpr int kSnapshotSchemaVersion = 1;
inline constexpr int kTaskSchemaVersion = 1;
inline constexpr std::size_t kCoherencyShown = 8;
inline constexpr std::size_t kMaxOutliers = 2;
inline constexpr std::size_t kRepresentativenessPool = 100;
inline constexpr std::size_t kRepresentativenessShown = 50;

/// Unix milliseconds as "YYYY-MM-DDTHH:MM:SS.mmmZ".
inline std::string iso8601_utc(std::int64_t unix_ms) {
  using namespace std::chrono;
  const sys_time<milliseconds> tp{milliseconds{unix_ms}};
  const auto day = floor<days>(tp);
  const year_month_day ymd{day};
  const hh_mm_ss hms{tp - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()), static_cast<int>(hms.subseconds().count()));
  return buf;
}

struct SnapshotSlice {
  std::string slice_id;
  std::string name;
  std::vector<std::string> image_ids;

  bool operator==(const SnapshotSlice&) const = default;
};

struct SessionSnapshot {
  Query query;
  std::vector<std::string> working_set_ids;
  std::vector<SnapshotSlice> slices;
  std::string created_at;
  std::string tool_version{kToolVersion};

  const SnapshotSlice& slice(const std::string& slice_id) const {
    for (const auto& s : slices) {
      if (s.slice_id == slice_id) return s;
    }
    fail(ErrorCode::not_found, "snapshot has no slice '" + slice_id + "'", slice_id);
  }

  bool operator==(const SessionSnapshot&) const = default;
};

inline SessionSnapshot export_snapshot(const Query& query, const WorkingSet& ws, std::span<const Slice> slices,
                                       std::int64_t created_at_ms) {
  SessionSnapshot snap;
  snap.query = query;
  snap.working_set_ids = ws.image_ids;
  snap.created_at = iso8601_utc(created_at_ms);
  for (const auto& s : slices) snap.slices.push_back({s.slice_id, s.name, s.image_ids});
  return snap;
}

inline nlohmann::json snapshot_to_json(const SessionSnapshot& snap) {
  nlohmann::json slices = nlohmann::json::array();
  for (const auto& s : snap.slices) {
    slices.push_back({{"slice_id", s.slice_id}, {"name", s.name}, {"image_ids", s.image_ids}});
  }
  return {
      {"schema_version", kSnapshotSchemaVersion},
      {"tool_version", snap.tool_version},
      {"created_at", snap.created_at},
      {"query", {{"baseline", snap.query.baseline}, {"augmented", snap.query.augmented}, {"k", snap.query.k}}},
      {"working_set_ids", snap.working_set_ids},
      {"slices", slices},
  };
}

/// Canonical text form: sorted keys, two-space indent, trailing newline.
inline std::string snapshot_to_string(const SessionSnapshot& snap) {
  return snapshot_to_json(snap).dump(2) + "\n";
}

/// Parses and validates a snapshot; every slice member must be in the working set.
inline SessionSnapshot snapshot_from_json(const nlohmann::json& j) {
  SessionSnapshot snap;
  try {
    const auto version = j.at("schema_version").get<int>();
    if (version != kSnapshotSchemaVersion) {
      fail(ErrorCode::format, "unsupported snapshot schema_version " + std::to_string(version));
    }
    j.at("tool_version").get_to(snap.tool_version);
    j.at("created_at").get_to(snap.created_at);
    const auto& q = j.at("query");
    q.at("baseline").get_to(snap.query.baseline);
    q.at("augmented").get_to(snap.query.augmented);
    q.at("k").get_to(snap.query.k);
    j.at("working_set_ids").get_to(snap.working_set_ids);
    for (const auto& s : j.at("slices")) {
      SnapshotSlice slice;
      s.at("slice_id").get_to(slice.slice_id);
      s.at("name").get_to(slice.name);
      s.at("image_ids").get_to(slice.image_ids);
      snap.slices.push_back(std::move(slice));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("snapshot schema violation: ") + e.what());
  }
  const std::unordered_set<std::string> ws(snap.working_set_ids.begin(), snap.working_set_ids.end());
  if (ws.size() != snap.working_set_ids.size()) {
    fail(ErrorCode::format, "snapshot working set contains duplicate ids");
  }
  if (snap.query.k != snap.working_set_ids.size()) {
    fail(ErrorCode::format, "snapshot k does not match working set size");
  }
  std::unordered_set<std::string> slice_ids;
  for (const auto& s : snap.slices) {
    if (!slice_ids.insert(s.slice_id).second) {
      fail(ErrorCode::format, "duplicate slice id '" + s.slice_id + "'", s.slice_id);
    }
    for (const auto& id : s.image_ids) {
      if (!ws.contains(id)) {
        fail(ErrorCode::not_found, "slice '" + s.slice_id + "' references '" + id + "' outside the working set", id);
      }
    }
  }
  return snap;
}

inline SessionSnapshot import_snapshot(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("snapshot is not valid JSON: ") + e.what());
  }
  return snapshot_from_json(j);
}

/// Every working-set id must be present in the corpus.
inline void check_against_corpus(const SessionSnapshot& snap, const EmbeddingMatrix& m) {
  for (const auto& id : snap.working_set_ids) {
    if (!m.contains(id)) fail(ErrorCode::not_found, "snapshot image '" + id + "' is not in the corpus", id);
  }
}

// ---------------------------------------------------------------------------

namespace detail {

// FNV-1a, so per-slice streams do not depend on std::hash.
inline std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline Rng task_rng(std::uint64_t seed, std::string_view slice_id) {
  return Rng(seed ^ stable_hash(slice_id));
}

inline Embedding slice_centroid(const EmbeddingMatrix& m, std::span<const std::string> ids) {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) rows.push_back(m.row_of(id));
  return mean_direction(m, rows);
}

}  // namespace detail

struct CoherencyTask {
  std::string slice_id;
  std::vector<std::string> shown_ids;
  std::vector<std::string> true_outlier_ids;
  std::uint64_t rng_seed = 0;
  std::size_t outliers_drawn = 0;  // before any reduction for lack of candidates
  double candidate_mean = 0.0;     // similarity statistics of the outlier pool
  double candidate_std = 0.0;
  bool outliers_reduced = false;
};

/// Outlier-detection task for one slice.
///
/// Shows up to eight members (ordered subsample when larger) and replaces
/// 0-2 of them, drawn uniformly, with images from the snapshot's other
/// slices whose similarity to this slice's centroid is at most one standard
/// deviation above the pool mean. At least one member always remains shown.
inline CoherencyTask make_coherency_task(const SessionSnapshot& snap, const EmbeddingMatrix& m,
                                         const std::string& slice_id, std::uint64_t seed) {
  const auto& target = snap.slice(slice_id);
  if (target.image_ids.size() < 2) {
    fail(ErrorCode::invalid_argument, "slice '" + slice_id + "' has fewer than two images", slice_id);
  }
  auto rng = detail::task_rng(seed, slice_id);
  CoherencyTask task;
  task.slice_id = slice_id;
  task.rng_seed = seed;
  task.outliers_drawn = static_cast<std::size_t>(uniform_index(rng, kMaxOutliers + 1));

  const auto& members = target.image_ids;
  for (auto p : sample_positions(rng, members.size(), kCoherencyShown)) task.shown_ids.push_back(members[p]);

  const std::unordered_set<std::string> member_set(members.begin(), members.end());
  std::vector<std::string> pool;
  std::unordered_set<std::string> pooled;
  for (const auto& other : snap.slices) {
    if (other.slice_id == slice_id) continue;
    for (const auto& id : other.image_ids) {
      if (!member_set.contains(id) && pooled.insert(id).second) pool.push_back(id);
    }
  }

  const auto centroid = detail::slice_centroid(m, members);
  std::vector<double> sims;
  sims.reserve(pool.size());
  for (const auto& id : pool) sims.push_back(cosine_similarity(m.embedding(id), centroid));
  const auto mv = mean_and_variance(sims);
  task.candidate_mean = mv.mean;
  task.candidate_std = std::sqrt(mv.var);
  const double ceiling = task.candidate_mean + task.candidate_std;
  std::vector<std::string> eligible;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (sims[i] <= ceiling) eligible.push_back(pool[i]);
  }

  std::size_t count = std::min(task.outliers_drawn, task.shown_ids.size() - 1);
  if (count > eligible.size()) count = eligible.size();
  task.outliers_reduced = count != task.outliers_drawn;

  const auto picks = sample_positions(rng, eligible.size(), count);
  const auto slots = sample_positions(rng, task.shown_ids.size(), count);
  for (std::size_t i = 0; i < count; ++i) {
    task.shown_ids[slots[i]] = eligible[picks[i]];
    task.true_outlier_ids.push_back(eligible[picks[i]]);
  }
  return task;
}

/// One task per slice with at least two images, in snapshot order.
inline std::vector<CoherencyTask> make_coherency_tasks(const SessionSnapshot& snap, const EmbeddingMatrix& m,
                                                       std::uint64_t seed) {
  std::vector<CoherencyTask> tasks;
  for (const auto& s : snap.slices) {
    if (s.image_ids.size() >= 2) tasks.push_back(make_coherency_task(snap, m, s.slice_id, seed));
  }
  return tasks;
}

struct CoherencyScore {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Micro-averaged F1 of selected vs. true outliers pooled over all tasks.
/// `selections[i]` answers `tasks[i]`. With no outliers and no selections
/// anywhere, the annotator is perfect and every metric is 1.
inline CoherencyScore score_coherency(std::span<const CoherencyTask> tasks,
                                      std::span<const std::vector<std::string>> selections) {
  if (selections.size() != tasks.size()) {
    fail(ErrorCode::invalid_argument, "expected one selection list per task");
  }
  CoherencyScore score;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& task = tasks[t];
    const std::unordered_set<std::string> shown(task.shown_ids.begin(), task.shown_ids.end());
    const std::unordered_set<std::string> truth(task.true_outlier_ids.begin(), task.true_outlier_ids.end());
    const std::unordered_set<std::string> picked(selections[t].begin(), selections[t].end());
    if (picked.size() > kMaxOutliers) {
      fail(ErrorCode::invalid_argument, "more than two selections for slice '" + task.slice_id + "'",
           task.slice_id);
    }
    for (const auto& id : picked) {
      if (!shown.contains(id)) {
        fail(ErrorCode::invalid_argument, "selection '" + id + "' was not shown for slice '" + task.slice_id + "'",
             id);
      }
      if (truth.contains(id)) {
        ++score.true_positives;
      } else {
        ++score.false_positives;
      }
    }
    for (const auto& id : truth) {
      if (!picked.contains(id)) ++score.false_negatives;
    }
  }
  const auto tp = static_cast<double>(score.true_positives);
  const auto fp = static_cast<double>(score.false_positives);
  const auto fn = static_cast<double>(score.false_negatives);
  if (tp + fp + fn == 0.0) {
    score.precision = score.recall = score.f1 = 1.0;
    return score;
  }
  score.precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
  score.recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
  score.f1 = 2.0 * tp / (2.0 * tp + fp + fn);
  return score;
}

struct RepresentativenessTask {
  std::string slice_id;
  std::vector<std::string> candidate_ids;  // in similarity-rank order
  std::uint64_t rng_seed = 0;
  std::size_t pool_size = 0;               // non-members ranked (<= 100)
  bool insufficient_candidates = false;
};

/// The (up to) 100 non-members of the working set most similar to the slice
/// centroid, most similar first; equal similarities order by id.
inline std::vector<std::string> representativeness_pool(const SessionSnapshot& snap, const EmbeddingMatrix& m,
                                                        const std::string& slice_id,
                                                        std::size_t* non_members = nullptr) {
  const auto& target = snap.slice(slice_id);
  if (target.image_ids.empty()) {
    fail(ErrorCode::invalid_argument, "slice '" + slice_id + "' is empty", slice_id);
  }
  const std::unordered_set<std::string> members(target.image_ids.begin(), target.image_ids.end());
  const auto centroid = detail::slice_centroid(m, target.image_ids);
  std::vector<std::pair<double, const std::string*>> ranked;
  for (const auto& id : snap.working_set_ids) {
    if (!members.contains(id)) ranked.emplace_back(cosine_similarity(m.embedding(id), centroid), &id);
  }
  if (non_members) *non_members = ranked.size();
  const auto pool = std::min(kRepresentativenessPool, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(pool), ranked.end(),
                    [](const auto& x, const auto& y) {
                      if (x.first != y.first) return x.first > y.first;
                      return *x.second < *y.second;
                    });
  std::vector<std::string> out;
  out.reserve(pool);
  for (std::size_t i = 0; i < pool; ++i) out.push_back(*ranked[i].second);
  return out;
}

/// Missed-image task: 50 images sampled from the representativeness pool,
/// kept in rank order.
inline RepresentativenessTask make_representativeness_task(const SessionSnapshot& snap, const EmbeddingMatrix& m,
                                                           const std::string& slice_id, std::uint64_t seed) {
  std::size_t non_members = 0;
  const auto pool = representativeness_pool(snap, m, slice_id, &non_members);
  RepresentativenessTask task;
  task.slice_id = slice_id;
  task.rng_seed = seed;
  task.pool_size = pool.size();
  task.insufficient_candidates = non_members < kRepresentativenessPool;
  auto rng = detail::task_rng(seed, slice_id);
  for (auto p : sample_positions(rng, pool.size(), kRepresentativenessShown)) task.candidate_ids.push_back(pool[p]);
  return task;
}

inline std::vector<RepresentativenessTask> make_representativeness_tasks(const SessionSnapshot& snap,
                                                                         const EmbeddingMatrix& m,
                                                                         std::uint64_t seed) {
  std::vector<RepresentativenessTask> tasks;
  for (const auto& s : snap.slices) {
    if (!s.image_ids.empty()) tasks.push_back(make_representativeness_task(snap, m, s.slice_id, seed));
  }
  return tasks;
}

// Task files.

inline void to_json(nlohmann::json& j, const CoherencyTask& t) {
  j = nlohmann::json{{"slice_id", t.slice_id},
                     {"shown_ids", t.shown_ids},
                     {"true_outlier_ids", t.true_outlier_ids},
                     {"rng_seed", t.rng_seed},
                     {"outliers_drawn", t.outliers_drawn},
                     {"candidate_mean", t.candidate_mean},
                     {"candidate_std", t.candidate_std},
                     {"outliers_reduced", t.outliers_reduced}};
}

inline void from_json(const nlohmann::json& j, CoherencyTask& t) {
  j.at("slice_id").get_to(t.slice_id);
  j.at("shown_ids").get_to(t.shown_ids);
  j.at("true_outlier_ids").get_to(t.true_outlier_ids);
  t.rng_seed = j.value("rng_seed", std::uint64_t{0});
  t.outliers_drawn = j.value("outliers_drawn", t.true_outlier_ids.size());
  t.candidate_mean = j.value("candidate_mean", 0.0);
  t.candidate_std = j.value("candidate_std", 0.0);
  t.outliers_reduced = j.value("outliers_reduced", false);
}

inline void to_json(nlohmann::json& j, const RepresentativenessTask& t) {
  j = nlohmann::json{{"slice_id", t.slice_id},
                     {"candidate_ids", t.candidate_ids},
                     {"rng_seed", t.rng_seed},
                     {"pool_size", t.pool_size},
                     {"insufficient_candidates", t.insufficient_candidates}};
}

inline void from_json(const nlohmann::json& j, RepresentativenessTask& t) {
  j.at("slice_id").get_to(t.slice_id);
  j.at("candidate_ids").get_to(t.candidate_ids);
  t.rng_seed = j.value("rng_seed", std::uint64_t{0});
  t.pool_size = j.value("pool_size", t.candidate_ids.size());
  t.insufficient_candidates = j.value("insufficient_candidates", false);
}

template <typename Task>
std::string tasks_to_string(std::string_view kind, std::uint64_t seed, std::span<const Task> tasks) {
  nlohmann::json j{{"schema_version", kTaskSchemaVersion}, {"kind", kind}, {"seed", seed},
                   {"tasks", nlohmann::json(std::vector<Task>(tasks.begin(), tasks.end()))}};
  return j.dump(2) + "\n";
}

/// Reads {"tasks": [...]} from a coherency task file.
inline std::vector<CoherencyTask> coherency_tasks_from_json(const nlohmann::json& j) {
  try {
    if (j.value("kind", std::string{"coherency"}) != "coherency") {
      fail(ErrorCode::format, "task file is not a coherency task file");
    }
    return j.at("tasks").get<std::vector<CoherencyTask>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("task file schema violation: ") + e.what());
  }
}

/// Answers file: {"selections": [{"slice_id": ..., "selected": [...]}, ...]}.
/// Tasks without an entry count as "nothing selected".
inline std::vector<std::vector<std::string>> selections_for(std::span<const CoherencyTask> tasks,
                                                            const nlohmann::json& answers) {
  std::unordered_map<std::string, std::vector<std::string>> by_slice;
  try {
    for (const auto& entry : answers.at("selections")) {
      auto id = entry.at("slice_id").get<std::string>();
      if (!by_slice.emplace(id, entry.at("selected").get<std::vector<std::string>>()).second) {
        fail(ErrorCode::format, "duplicate answer for slice '" + id + "'", id);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("answers schema violation: ") + e.what());
  }
  std::vector<std::vector<std::string>> out;
  out.reserve(tasks.size());
  for (const auto& t : tasks) {
    auto it = by_slice.find(t.slice_id);
    out.push_back(it == by_slice.end() ? std::vector<std::string>{} : it->second);
  }
  return out;
}

inline nlohmann::json score_to_json(const CoherencyScore& s) {
  return {{"true_positives", s.true_positives}, {"false_positives", s.false_positives},
          {"false_negatives", s.false_negatives}, {"precision", s.precision},
          {"recall", s.recall}, {"f1", s.f1}};
}

}  // namespace vlslice
