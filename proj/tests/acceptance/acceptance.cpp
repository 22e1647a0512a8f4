// Acceptance suite: one PASS/FAIL line per primary criterion.
//
// Every check is seeded; failures print the first counterexample found.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "server_harness.hpp"
#include "test_support.hpp"
#include "vlslice/vlslice.hpp"

#ifndef VLSLICE_TEST_DATA_DIR
#define VLSLICE_TEST_DATA_DIR ""
#endif

namespace {

using namespace vlslice;
using nlohmann::json;

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  std::string name;
  double time_limit_s;  // 0 = no limit
  std::function<Outcome()> run;
};

Outcome failure(std::string why) { return {false, std::move(why)}; }

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(4);
  out << v;
  return out.str();
}

std::shared_ptr<const Corpus> corpus_of(EmbeddingMatrix m) {
  Corpus c;
  for (const auto& id : m.ids()) c.records.push_back({id, "synthetic://" + id, {}});
  c.matrix = std::move(m);
  return std::make_shared<const Corpus>(std::move(c));
}

std::vector<std::string> sample_ids(Rng& rng, const std::vector<std::string>& pool, std::size_t count) {
  std::vector<std::string> out;
  for (auto p : sample_positions(rng, pool.size(), count)) out.push_back(pool[p]);
  return out;
}

// ---------------------------------------------------------------------------

Outcome delta_c_oracle() {
  std::size_t values = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const auto n = 2 + uniform_index(rng, 499);
    const auto dim = 4 + uniform_index(rng, 61);
    std::vector<std::vector<float>> rows;
    for (std::size_t i = 0; i < n; ++i) {
      // Every fourth set repeats rows so tied similarities are exercised.
      if (seed % 4 == 0 && i > 0 && uniform_index(rng, 3) == 0) {
        rows.push_back(rows[uniform_index(rng, i)]);
      } else {
        rows.push_back(fixtures::random_unit(rng, dim));
      }
    }
    const auto m = fixtures::make_matrix(rows);
    const auto ws = fixtures::whole_working_set(m);
    const auto b = fixtures::random_unit(rng, dim);
    const auto a = fixtures::random_unit(rng, dim);
    const auto profile = delta_c(m, ws, b, a);

    std::vector<double> sb(n);
    std::vector<double> sa(n);
    for (std::size_t i = 0; i < n; ++i) {
      sb[i] = std::clamp(oracle::dot(m.row(i), b), -1.0, 1.0);
      sa[i] = std::clamp(oracle::dot(m.row(i), a), -1.0, 1.0);
    }
    const auto expected = oracle::delta_c(sb, sa);
    const double lo = 1.0 / static_cast<double>(n) - 1.0;
    const double hi = 1.0 - 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (profile.delta_c[i] != expected[i]) {
        return failure("seed " + std::to_string(seed) + " position " + std::to_string(i) + ": " +
                       fmt(profile.delta_c[i]) + " != " + fmt(expected[i]));
      }
      if (profile.delta_c[i] < lo || profile.delta_c[i] > hi) {
        return failure("seed " + std::to_string(seed) + ": value " + fmt(profile.delta_c[i]) + " out of bounds");
      }
      ++values;
    }
  }
  return {true, "200 working sets, " + std::to_string(values) + " values identical"};
}

Outcome rank_invariance() {
  Rng rng(2024);
  const std::size_t n = 400;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(fixtures::image_id(i));
  // Scores on a coarse grid in [-1, 1] with repeats: distinct values are far
  // apart relative to double precision, and ties stay ties under any function.
  auto grid_scores = [&] {
    std::vector<double> s(n);
    for (auto& x : s) x = -1.0 + 2.0 * static_cast<double>(uniform_index(rng, 301)) / 300.0;
    return s;
  };
  const auto sb = grid_scores();
  const auto sa = grid_scores();
  const auto reference = profile_from_scores(ids, sb, sa).delta_c;
  // A composition can overflow or collapse neighbours in floating point; such
  // draws are not strictly increasing as evaluated and are redrawn.
  std::vector<double> grid;
  for (int g = 0; g <= 300; ++g) grid.push_back(-1.0 + 2.0 * g / 300.0);
  auto strictly_increasing_on = [](const std::vector<double>& xs, const std::function<double(double)>& h) {
    for (std::size_t i = 1; i < xs.size(); ++i) {
      const double lo = h(xs[i - 1]);
      const double hi = h(xs[i]);
      if (!std::isfinite(lo) || !std::isfinite(hi) || !(hi > lo)) return false;
    }
    return true;
  };

  using Fn = std::function<double(double)>;
  const std::vector<std::function<Fn(Rng&)>> families{
      [](Rng& r) -> Fn {
        const double scale = uniform_real(r, 0.01, 100.0);
        const double shift = uniform_real(r, -50.0, 50.0);
        return [=](double x) { return scale * x + shift; };
      },
      [](Rng& r) -> Fn {
        const double k = uniform_real(r, 0.1, 5.0);
        return [=](double x) { return std::exp(k * x); };
      },
      [](Rng&) -> Fn { return [](double x) { return x * x * x; }; },
      [](Rng& r) -> Fn {
        const double k = uniform_real(r, 0.2, 3.0);
        return [=](double x) { return std::atan(k * x); };
      },
      [](Rng& r) -> Fn {
        const double c = uniform_real(r, 1.5, 10.0);
        return [=](double x) { return std::log(x + c); };
      },
  };
  std::size_t redrawn = 0;
  for (int t = 0; t < 50; ++t) {
    // Compose two random monotone maps.
    Fn f;
    Fn g;
    do {
      f = families[uniform_index(rng, families.size())](rng);
      g = families[uniform_index(rng, families.size())](rng);
      ++redrawn;
    } while (!strictly_increasing_on(grid, [&](double x) { return g(f(x)); }));
    --redrawn;
    std::vector<double> tb(n);
    std::vector<double> ta(n);
    for (std::size_t i = 0; i < n; ++i) {
      tb[i] = g(f(sb[i]));
      ta[i] = g(f(sa[i]));
    }
    const auto transformed = profile_from_scores(ids, tb, ta).delta_c;
    if (transformed != reference) return failure("transform " + std::to_string(t) + " changed delta_c");
  }
  return {true, "50 transforms (" + std::to_string(redrawn) + " non-monotone draws redrawn), " +
                    std::to_string(n) + " images, bit-identical"};
}

Outcome clustering_oracle() {
  const std::vector<ClusteringConfig> configs{{0.95, 0.2}, {1.0, 0.2}, {0.8, 0.3},
                                              {0.5, 0.4},  {0.99, 0.1}, {0.9, 0.5}};
  std::size_t merges_checked = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed + 500);
    const auto n = 2 + uniform_index(rng, 199);
    const auto dim = 4 + uniform_index(rng, 29);
    const auto centers = 1 + uniform_index(rng, 8);
    const double noise = uniform_real(rng, 0.02, 0.5);
    const auto m = fixtures::mixture_matrix(n, dim, centers, noise, seed);
    const auto ws = fixtures::whole_working_set(m);
    const auto p = fixtures::random_profile(ws, seed + 9000);
    std::vector<std::span<const float>> rows;
    for (auto r : ws.rows) rows.push_back(m.row(r));
    for (const auto& cfg : configs) {
      const auto clusters = agglomerate(ws, p, m, cfg);
      std::vector<std::vector<std::size_t>> got;
      for (const auto& c : clusters) got.push_back(c.positions);
      const auto want = oracle::average_linkage(oracle::blended_distances(rows, p.delta_c, cfg.a), cfg.dt);
      if (got != want) {
        return failure("seed " + std::to_string(seed) + " a=" + fmt(cfg.a) + " dt=" + fmt(cfg.dt) + ": " +
                       std::to_string(got.size()) + " clusters vs reference " + std::to_string(want.size()));
      }
      merges_checked += n - got.size();
    }
  }
  return {true, "50 inputs x 6 (a, dt) pairs, " + std::to_string(merges_checked) + " merges agree"};
}

Outcome blend_endpoints() {
  const auto m = fixtures::random_matrix(300, 24, 77);
  const auto ws = fixtures::whole_working_set(m);
  const auto p = fixtures::random_profile(ws, 78);
  Rng rng(79);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto i = uniform_index(rng, ws.k());
    const auto j = uniform_index(rng, ws.k());
    const double cos_dist = i == j ? 0.0 : 1.0 - std::clamp(oracle::dot(m.row(i), m.row(j)), -1.0, 1.0);
    const double dc_dist = i == j ? 0.0 : std::abs(p.delta_c[i] - p.delta_c[j]);
    const double e1 = std::abs(pairwise_distance(i, j, ws, p, m, {1.0, 0.2}) - cos_dist);
    const double e0 = std::abs(pairwise_distance(i, j, ws, p, m, {0.0, 0.2}) - dc_dist);
    worst = std::max({worst, e0, e1});
    if (e1 > 1e-12 || e0 > 1e-12) {
      return failure("pair (" + std::to_string(i) + ", " + std::to_string(j) + ") error " + fmt(std::max(e0, e1)));
    }
  }
  return {true, "1000 pairs, max error " + fmt(worst)};
}

Outcome recommendation_contracts() {
  std::size_t lists = 0;
  std::size_t capped = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed + 31337);
    const auto n = 80 + uniform_index(rng, 320);
    const auto dim = 8 + uniform_index(rng, 25);
    auto corpus = corpus_of(fixtures::mixture_matrix(n, dim, 2 + uniform_index(rng, 10), uniform_real(rng, 0.1, 0.6),
                                                     seed));
    auto encoder = std::make_shared<FixtureTextEncoder>(std::map<std::string, Embedding>{
        {"baseline", fixtures::random_unit(rng, dim)}, {"augmented", fixtures::random_unit(rng, dim)}});
    SessionStore store(corpus, encoder, {}, [] { return std::int64_t{0}; });
    const ClusteringConfig cfg{uniform_index(rng, 2) ? 0.95 : uniform_real(rng, 0.3, 1.0), uniform_real(rng, 0.02, 0.4)};
    auto session = store.create({"baseline", "augmented", n / 2 + uniform_index(rng, n / 2)}, cfg);
    const auto& ws_ids = session->working_set().image_ids;

    const auto slice_count = 1 + uniform_index(rng, 3);
    for (std::size_t s = 0; s < slice_count; ++s) {
      const auto seed_ids = sample_ids(rng, ws_ids, 1 + uniform_index(rng, 15));
      auto slice = store.create_slice(session->id(), "slice", seed_ids);
      if (uniform_index(rng, 2)) {
        const auto add = sample_ids(rng, ws_ids, 1 + uniform_index(rng, 5));
        const std::vector<std::string> remove{slice.image_ids.front()};
        slice = session->update_slice(slice.slice_id, add, slice.image_ids.size() > 1 ? remove : std::vector<std::string>{},
                                      std::nullopt, 0);
      }
      const std::set<std::string> members(slice.image_ids.begin(), slice.image_ids.end());
      for (auto kind : {RecommendationKind::similar, RecommendationKind::counterfactual}) {
        const auto rec = session->recommendations(slice.slice_id, kind);
        ++lists;
        if (rec.cluster_ids.size() > kMaxRecommendations) return failure("list longer than 50");
        if (rec.cluster_ids.size() == kMaxRecommendations) ++capped;
        for (std::size_t i = 0; i < rec.cluster_ids.size(); ++i) {
          const auto& c = session->cluster(rec.cluster_ids[i]);
          if (i > 0 && rec.similarity[i] > rec.similarity[i - 1]) return failure("list not sorted");
          if (kind == RecommendationKind::counterfactual && !(c.mean_dc * slice.mean_dc < 0.0)) {
            return failure("counterfactual sign violated in session " + std::to_string(seed));
          }
          for (const auto& id : c.image_ids) {
            if (members.contains(id)) return failure("recommended cluster contains slice member " + id);
          }
        }
      }
    }
  }
  return {true, "100 sessions, " + std::to_string(lists) + " lists (" + std::to_string(capped) +
                    " at the cap), zero violations"};
}

Outcome planted_bias() {
  synthetic::Options opt;  // 1000 subjects + 1000 distractors
  opt.seed = 11;
  const auto ds = synthetic::generate(opt);
  const auto& m = ds.corpus.matrix;
  if (m.count() != 2000) return failure("expected 2000 vectors");

  // Top-k with a subject-aligned baseline.
  const auto ws = select_working_set(m, ds.subject_direction, opt.subjects, ds.baseline);
  const std::set<std::string> planted(ds.subject_ids.begin(), ds.subject_ids.end());
  std::size_t recovered = 0;
  for (const auto& id : ws.image_ids) recovered += planted.contains(id) ? 1 : 0;
  const double recall = static_cast<double>(recovered) / static_cast<double>(planted.size());

  // Planted profile: delta_c = beta * cos(phi, v) + N(0, 0.05).
  const double beta = 1.0;
  Rng rng(12);
  AffinityProfile profile;
  profile.image_ids = ws.image_ids;
  std::vector<std::pair<double, std::string>> aligned;
  for (std::size_t i = 0; i < ws.k(); ++i) {
    const double c = cosine_similarity(m.row(ws.rows[i]), ds.concept_direction);
    profile.delta_c.push_back(beta * c + 0.05 * standard_normal(rng));
    aligned.emplace_back(c, ws.image_ids[i]);
  }
  std::sort(aligned.begin(), aligned.end(), [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second < y.second;
  });
  std::vector<std::string> seed_ids;
  for (std::size_t i = 0; i < 30; ++i) seed_ids.push_back(aligned[i].second);
  SliceContext ctx(m, ws, profile);
  const auto slice = create_slice(ctx, "sl1", "planted", seed_ids);
  const auto report = correlation_report(slice, ws, profile, m);

  // Same slice against the pipeline's own delta_c (augmented caption leaning towards v).
  const auto pipeline = delta_c(m, ws, ds.captions.at(ds.baseline), ds.captions.at(ds.augmented));
  SliceContext pctx(m, ws, pipeline);
  const auto pslice = create_slice(pctx, "sl2", "pipeline", seed_ids);
  const auto preport = correlation_report(pslice, ws, pipeline, m);

  const std::string detail = "slope " + fmt(report.slope) + ", r " + fmt(report.pearson_r) + ", recall " +
                             fmt(recall) + " (pipeline delta_c: slope " + fmt(preport.slope) + ", r " +
                             fmt(preport.pearson_r) + ")";
  if (!report.fit_defined || !(report.slope > 0.0) || !(report.pearson_r > 0.8) || recall < 0.95) {
    return failure(detail);
  }
  return {true, detail};
}

Outcome prep_geometry() {
  using namespace vlslice::prep;
  Rng rng(404);
  for (int t = 0; t < 1000; ++t) {
    const double x1 = uniform_real(rng, -100, 900);
    const double y1 = uniform_real(rng, -100, 900);
    BoxRecord b{"im", 1000, 800, x1, y1, x1 + uniform_real(rng, 0.5, 600), y1 + uniform_real(rng, 0.5, 600), "c", {}};
    const auto d = make_crop_directive(b);
    if (d.side != 1.1 * std::max(b.y2 - b.y1, b.x2 - b.x1)) return failure("crop side mismatch on box " + std::to_string(t));
    if (d.center_x != (b.x1 + b.x2) / 2.0 || d.center_y != (b.y1 + b.y2) / 2.0) return failure("crop not centred");
  }
  const std::vector<BoxRecord> sized{{"im", 500, 500, 0, 0, 63, 63, "c", {}}, {"im", 500, 500, 100, 100, 164, 164, "c", {}}};
  const auto kept = filter_boxes(sized, {});
  if (kept.size() != 1 || kept[0].x1 != 100.0) return failure("64x64 size rule violated");
  for (int t = 0; t < 200; ++t) {
    std::vector<BoxRecord> boxes;
    const auto count = 1 + uniform_index(rng, 40);
    for (std::size_t i = 0; i < count; ++i) {
      const double x = uniform_real(rng, 0, 400);
      const double y = uniform_real(rng, 0, 400);
      boxes.push_back({"im", 500, 500, x, y, x + uniform_real(rng, 4, 150), y + uniform_real(rng, 4, 150),
                       std::string(1, static_cast<char>('a' + uniform_index(rng, 3))), {}});
    }
    const double thr = uniform_real(rng, 0.05, 1.0);
    const auto once = nms(boxes, thr);
    if (nms(once, thr) != once) return failure("nms not idempotent on set " + std::to_string(t));
  }
  return {true, "1000 crops exact, 63/64 rule, 200 nms sets idempotent"};
}

SessionSnapshot random_snapshot(Rng& rng, const EmbeddingMatrix& m) {
  SessionSnapshot snap;
  snap.query = {"baseline", "augmented", m.count()};
  snap.working_set_ids = m.ids();
  snap.created_at = iso8601_utc(0);
  const auto slices = 1 + uniform_index(rng, 8);
  for (std::size_t s = 0; s < slices; ++s) {
    snap.slices.push_back({"sl" + std::to_string(s + 1), "slice",
                           sample_ids(rng, snap.working_set_ids, 1 + uniform_index(rng, 20))});
  }
  return snap;
}

CoherencyTask task_of(std::vector<std::string> shown, std::vector<std::string> truth) {
  CoherencyTask t;
  t.slice_id = "s" + std::to_string(shown.size());
  t.shown_ids = std::move(shown);
  t.true_outlier_ids = std::move(truth);
  return t;
}

Outcome eval_harness() {
  // Outlier similarity ceiling, recomputed independently of the harness.
  std::size_t outliers = 0;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Rng rng(seed + 60000);
    const auto m = fixtures::mixture_matrix(60 + uniform_index(rng, 80), 12, 4, 0.4, seed);
    const auto snap = random_snapshot(rng, m);
    for (const auto& task : make_coherency_tasks(snap, m, seed)) {
      const auto& target = snap.slice(task.slice_id).image_ids;
      const std::set<std::string> members(target.begin(), target.end());
      std::vector<double> centroid(m.dim(), 0.0);
      for (const auto& id : target) {
        for (std::size_t d = 0; d < m.dim(); ++d) centroid[d] += m.embedding(id)[d];
      }
      double norm = 0.0;
      for (double x : centroid) norm += x * x;
      norm = std::sqrt(norm);
      std::vector<float> unit(m.dim());
      for (std::size_t d = 0; d < m.dim(); ++d) unit[d] = static_cast<float>(centroid[d] / norm);
      std::set<std::string> pool;
      for (const auto& s : snap.slices) {
        if (s.slice_id == task.slice_id) continue;
        for (const auto& id : s.image_ids) {
          if (!members.contains(id)) pool.insert(id);
        }
      }
      std::vector<double> sims;
      for (const auto& id : pool) sims.push_back(oracle::dot(m.embedding(id), unit));
      double mean = 0.0;
      for (double s : sims) mean += s;
      mean /= static_cast<double>(std::max<std::size_t>(1, sims.size()));
      double var = 0.0;
      for (double s : sims) var += (s - mean) * (s - mean);
      var /= static_cast<double>(std::max<std::size_t>(1, sims.size()));
      const double ceiling = mean + std::sqrt(var);
      for (const auto& id : task.true_outlier_ids) {
        ++outliers;
        if (!pool.contains(id)) return failure("outlier " + id + " not drawn from other slices");
        if (oracle::dot(m.embedding(id), unit) > ceiling + 1e-9) {
          return failure("seed " + std::to_string(seed) + ": outlier " + id + " above mean + std");
        }
      }
    }
  }

  // Hand-computed micro F1 = 2TP / (2TP + FP + FN).
  struct Fixture {
    std::vector<CoherencyTask> tasks;
    std::vector<std::vector<std::string>> selections;
    double f1;
  };
  const std::vector<Fixture> fixtures{
      {{task_of({"a", "b"}, {"a"})}, {{"a"}}, 1.0},
      {{task_of({"a", "b"}, {"a"})}, {{}}, 0.0},
      {{task_of({"a", "b"}, {"a"})}, {{"b"}}, 0.0},
      {{task_of({"a", "b", "c"}, {"a"}), task_of({"d", "e"}, {"d"})}, {{"a", "b"}, {}}, 0.5},
      {{task_of({"a", "b", "c"}, {"a", "b"})}, {{"a"}}, 2.0 / 3.0},
      {{task_of({"a", "b", "c"}, {"a"})}, {{"a", "c"}}, 2.0 / 3.0},
      {{task_of({"a", "b", "c"}, {"a", "b"}), task_of({"d", "e", "f"}, {"d"})}, {{"a", "b"}, {"e"}}, 4.0 / 6.0},
      {{task_of({"a", "b", "c"}, {"a", "b"}), task_of({"d", "e", "f"}, {"d", "e"})}, {{"a", "b"}, {"d"}}, 6.0 / 7.0},
      {{task_of({"a", "b"}, {}), task_of({"c", "d"}, {})}, {{}, {}}, 1.0},
      {{task_of({"a", "b", "c"}, {}), task_of({"d", "e"}, {"d"}), task_of({"f", "g"}, {"g"})},
       {{"a"}, {"d"}, {"g"}},
       4.0 / 5.0},
  };
  for (std::size_t i = 0; i < fixtures.size(); ++i) {
    const auto got = score_coherency(fixtures[i].tasks, fixtures[i].selections).f1;
    if (got != fixtures[i].f1) return failure("F1 fixture " + std::to_string(i) + ": " + fmt(got));
  }

  // Byte-identical task files for a repeated seed.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto m = fixtures::mixture_matrix(150, 12, 4, 0.4, seed);
    const auto snap = random_snapshot(rng, m);
    const auto c1 = tasks_to_string<CoherencyTask>("coherency", seed, make_coherency_tasks(snap, m, seed));
    const auto c2 = tasks_to_string<CoherencyTask>("coherency", seed, make_coherency_tasks(snap, m, seed));
    const auto r1 = tasks_to_string<RepresentativenessTask>("representativeness", seed,
                                                            make_representativeness_tasks(snap, m, seed));
    const auto r2 = tasks_to_string<RepresentativenessTask>("representativeness", seed,
                                                            make_representativeness_tasks(snap, m, seed));
    if (c1 != c2 || r1 != r2) return failure("task JSON differs for seed " + std::to_string(seed));
  }
  return {true, "500 generations (" + std::to_string(outliers) + " outliers within ceiling), 10 F1 fixtures, "
                "deterministic task JSON"};
}

/// Scripted API session; returns the snapshot text and appends every response body to `transcript`.
std::string scripted_session(std::string& transcript) {
  const auto ds = synthetic::generate({});
  auto store = fixtures::fixture_store(ds);
  fixtures::ApiServer server(*store);
  auto cli = server.client();
  auto call = [&](const httplib::Result& res, int expect) {
    if (!res) throw std::runtime_error("no response");
    if (res->status != expect) throw std::runtime_error("HTTP " + std::to_string(res->status) + ": " + res->body);
    transcript += res->body;
    transcript += '\n';
    return json::parse(res->body);
  };
  auto post = [&](const std::string& path, const json& body, int expect = 200) {
    return call(cli.Post(path, body.dump(), "application/json"), expect);
  };

  const auto session = post("/sessions", {{"baseline", ds.baseline}, {"augmented", ds.augmented}, {"k", 600}}, 201);
  const std::string sid = session["session_id"];
  const auto search = post("/sessions/" + sid + "/clusters/search", {{"text", ds.concept_text}});
  std::vector<std::string> seed_ids;
  for (std::size_t i = 0; i < 2 && i < search["ordering"].size(); ++i) {
    const auto c = call(cli.Get("/sessions/" + sid + "/clusters/" + std::to_string(search["ordering"][i].get<int>())), 200);
    for (const auto& id : c["image_ids"]) seed_ids.push_back(id);
  }
  const auto slice = post("/sessions/" + sid + "/slices", {{"name", "suits"}, {"image_ids", seed_ids}}, 201);
  const std::string slice_id = slice["slice_id"];
  const auto similar = call(cli.Get("/slices/" + slice_id + "/recommendations?kind=similar"), 200);
  call(cli.Get("/slices/" + slice_id + "/recommendations?kind=counterfactual"), 200);
  if (!similar["clusters"].empty()) {
    const auto c = call(cli.Get("/sessions/" + sid + "/clusters/" +
                                std::to_string(similar["clusters"][0]["cluster_id"].get<int>())),
                        200);
    call(cli.Patch("/slices/" + slice_id, json{{"add", c["image_ids"]}}.dump(), "application/json"), 200);
  }
  const auto corr = call(cli.Get("/slices/" + slice_id + "/correlation?outliers=5"), 200);
  std::vector<std::string> outliers;
  for (const auto& id : corr["outliers"]) {
    if (std::find(seed_ids.begin(), seed_ids.end(), id.get<std::string>()) == seed_ids.end()) outliers.push_back(id);
  }
  call(cli.Patch("/slices/" + slice_id, json{{"add", outliers}, {"name", "suits (validated)"}}.dump(),
                 "application/json"),
       200);
  post("/sessions/" + sid + "/slices", {{"name", "second"}, {"image_ids", json::array({seed_ids.front()})}}, 201);
  auto snap = cli.Get("/sessions/" + sid + "/snapshot");
  if (!snap || snap->status != 200) throw std::runtime_error("snapshot request failed");
  return snap->body;
}

Outcome end_to_end_determinism() {
  std::string t1;
  std::string t2;
  const auto s1 = scripted_session(t1);
  const auto s2 = scripted_session(t2);
  if (s1 != s2) return failure("snapshots differ between runs");
  if (t1 != t2) return failure("API transcripts differ between runs");
  const auto snap = import_snapshot(s1);
  std::string detail = "snapshot " + std::to_string(s1.size()) + " bytes, " + std::to_string(snap.slices.size()) +
                       " slices, identical across runs";
  const std::filesystem::path golden = std::filesystem::path(VLSLICE_TEST_DATA_DIR) / "e2e_snapshot.json";
  if (!std::string(VLSLICE_TEST_DATA_DIR).empty() && std::filesystem::exists(golden)) {
    std::ifstream in(golden, std::ios::binary);
    const std::string expected((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (expected != s1) return failure("snapshot differs from the recorded reference " + golden.string());
    detail += " and to the recorded reference";
  }
  return {true, detail};
}

Outcome snapshot_round_trip() {
  const std::vector<std::string> names{"suits", "", "glasses & \"hats\"", "caf\xc3\xa9 \xe2\x98\x95", "tab\tand\nnewline",
                                       "back\\slash"};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed + 4242);
    const auto n = 30 + uniform_index(rng, 200);
    const auto dim = 4 + uniform_index(rng, 20);
    auto corpus = corpus_of(fixtures::mixture_matrix(n, dim, 1 + uniform_index(rng, 6), 0.3, seed));
    auto encoder = std::make_shared<FixtureTextEncoder>(std::map<std::string, Embedding>{
        {"b", fixtures::random_unit(rng, dim)}, {"a", fixtures::random_unit(rng, dim)}});
    const auto now = static_cast<std::int64_t>(uniform_index(rng, 4102444800000ULL));
    SessionStore store(corpus, encoder, {}, [now] { return now; });
    auto session = store.create({"b", "a", 1 + uniform_index(rng, n)});
    const auto& ws_ids = session->working_set().image_ids;
    const auto slices = uniform_index(rng, 6);
    for (std::size_t s = 0; s < slices; ++s) {
      const auto name = names[uniform_index(rng, names.size())];
      store.create_slice(session->id(), name, sample_ids(rng, ws_ids, uniform_index(rng, 12)));
    }
    const auto original = session->snapshot();
    const auto first = snapshot_to_string(original);
    const auto imported = import_snapshot(first);
    const auto second = snapshot_to_string(imported);
    if (first != second) return failure("session " + std::to_string(seed) + ": export differs after import");
    if (!(imported == original)) return failure("session " + std::to_string(seed) + ": imported snapshot differs");
    check_against_corpus(imported, corpus->matrix);
  }
  return {true, "50 sessions byte-identical"};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc == 3 && std::string(argv[1]) == "--record-snapshot") {
    std::string transcript;
    std::ofstream(argv[2], std::ios::binary) << scripted_session(transcript);
    return 0;
  }
  const std::vector<Criterion> criteria{
      {"delta_c oracle equivalence", 10.0, delta_c_oracle},
      {"rank invariance", 0.0, rank_invariance},
      {"clustering oracle equivalence", 60.0, clustering_oracle},
      {"blend endpoints", 0.0, blend_endpoints},
      {"recommendation contracts", 0.0, recommendation_contracts},
      {"planted bias end-to-end", 30.0, planted_bias},
      {"prep geometry", 0.0, prep_geometry},
      {"eval harness", 0.0, eval_harness},
      {"end-to-end determinism", 0.0, end_to_end_determinism},
      {"snapshot round trip", 0.0, snapshot_round_trip},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = failure(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (out.pass && c.time_limit_s > 0.0 && secs >= c.time_limit_s) {
      out = failure(out.detail + "; took " + fmt(secs) + " s, limit " + fmt(c.time_limit_s) + " s");
    }
    std::cout << (out.pass ? "PASS" : "FAIL") << "  " << c.name << ": " << out.detail << " [" << fmt(secs) << " s]"
              << std::endl;
    failed += out.pass ? 0 : 1;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
