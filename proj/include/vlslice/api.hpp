#pragma once

#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "vlslice/errors.hpp"
#include "vlslice/json_io.hpp"
#include "vlslice/session.hpp"

// HTTP+JSON surface over a SessionStore.
//
//   GET   /healthz
//   POST  /sessions                             {baseline, augmented, k?, a?, dt?}
//   GET   /sessions/:id
//   GET   /sessions/:id/clusters?sort=&filters=
//   GET   /sessions/:id/clusters/:cid
//   POST  /sessions/:id/clusters/search         {text}
//   POST  /sessions/:id/slices                  {name, image_ids}
//   GET   /sessions/:id/slices
//   GET   /sessions/:id/snapshot
//   GET   /images/:image_id
//   GET   /slices/:sid
//   PATCH /slices/:sid                          {add, remove, name}
//   GET   /slices/:sid/recommendations?kind=similar|counterfactual
//   GET   /slices/:sid/correlation?outliers=m
//
// Errors come back as {"error": code, "message": text, "subject": id?} with
// 400 (bad input), 404 (unknown id), 409 (precondition, e.g. empty slice) or
// 503 (text encoder unavailable). create_session runs on the worker thread
// that received it; other requests keep being served by the remaining pool.

namespace vlslice::api {

using nlohmann::json;

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict: return 409;
    case ErrorCode::unavailable: return 503;
    default: return 400;
  }
}

inline void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message,
                       const std::string& subject = {}) {
  json body{{"error", code}, {"message", message}};
  if (!subject.empty()) body["subject"] = subject;
  send_json(res, body, status);
}

inline json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    auto j = json::parse(req.body);
    if (!j.is_object()) fail(ErrorCode::invalid_argument, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    fail(ErrorCode::invalid_argument, std::string("malformed JSON body: ") + e.what());
  }
}

template <typename T>
T field(const json& body, const char* key, T fallback) {
  if (!body.contains(key) || body.at(key).is_null()) return fallback;
  try {
    return body.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::invalid_argument, std::string("field '") + key + "' has the wrong type", key);
  }
}

/// Wraps a handler so library errors map onto status codes.
inline httplib::Server::Handler guarded(std::function<void(const httplib::Request&, httplib::Response&)> fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, http_status(e.code()), to_string(e.code()), e.what(), e.subject());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

inline json session_summary(const Session& s, std::size_t bins) {
  const auto view = s.view();
  const auto hs = attribute_histograms(s.clusters(), bins);
  auto body = wire::view(view, s.clusters());
  body["session_id"] = s.id();
  body["query"] = {{"baseline", s.query().baseline}, {"augmented", s.query().augmented}, {"k", s.query().k}};
  body["working_set_size"] = s.working_set().k();
  body["cluster_count"] = s.clusters().size();
  body["clustering"] = {{"a", s.clustering_config().a}, {"dt", s.clustering_config().dt}};
  body["histograms"] = wire::histograms(hs);
  return body;
}

inline void register_routes(httplib::Server& server, SessionStore& store) {
  const auto bins = store.defaults().histogram_bins;

  server.Get("/healthz", guarded([&store](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"status", "ok"},
                    {"corpus_size", store.corpus().matrix.count()},
                    {"dim", store.corpus().matrix.dim()}});
  }));

  server.Post("/sessions", guarded([&store, bins](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    Query q;
    q.baseline = field<std::string>(body, "baseline", "");
    q.augmented = field<std::string>(body, "augmented", "");
    const auto k = field<long long>(body, "k", static_cast<long long>(store.defaults().k));
    if (k < 1) fail(ErrorCode::invalid_argument, "k must be positive");
    q.k = static_cast<std::size_t>(k);
    ClusteringConfig cfg = store.defaults().clustering;
    cfg.a = field<double>(body, "a", cfg.a);
    cfg.dt = field<double>(body, "dt", cfg.dt);
    auto session = store.create(std::move(q), cfg);
    send_json(res, session_summary(*session, bins), 201);
  }));

  server.Get("/sessions/:id", guarded([&store, bins](const httplib::Request& req, httplib::Response& res) {
    send_json(res, session_summary(*store.session(req.path_params.at("id")), bins));
  }));

  server.Get("/sessions/:id/clusters", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    auto s = store.session(req.path_params.at("id"));
    const auto key = parse_sort_key(req.get_param_value("sort"));
    auto filters = parse_filters(req.get_param_value("filters"));
    const auto view = s->set_view(key, std::move(filters));
    send_json(res, wire::view(view, s->clusters()));
  }));

  server.Get("/sessions/:id/clusters/:cid", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    auto s = store.session(req.path_params.at("id"));
    std::size_t cid = 0;
    try {
      cid = std::stoul(req.path_params.at("cid"));
    } catch (const std::exception&) {
      fail(ErrorCode::not_found, "unknown cluster '" + req.path_params.at("cid") + "'", req.path_params.at("cid"));
    }
    send_json(res, wire::cluster_detail(s->cluster(cid), s->profile()));
  }));

  server.Post("/sessions/:id/clusters/search", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    auto s = store.session(req.path_params.at("id"));
    const auto text = field<std::string>(parse_body(req), "text", "");
    const auto scores = s->search(store.encoder(), text);
    json ranked = json::array();
    std::vector<std::size_t> ordering;
    for (const auto& sc : scores) {
      ranked.push_back({{"cluster_id", sc.cluster_id}, {"score", sc.score}});
      ordering.push_back(sc.cluster_id);
    }
    send_json(res, {{"text", text}, {"ordering", ordering}, {"scores", ranked}});
  }));

  server.Post("/sessions/:id/slices", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    const auto& session_id = req.path_params.at("id");
    const auto body = parse_body(req);
    const auto ids = field<std::vector<std::string>>(body, "image_ids", {});
    auto slice = store.create_slice(session_id, field<std::string>(body, "name", ""), ids);
    send_json(res, wire::slice(slice, session_id), 201);
  }));

  server.Get("/sessions/:id/slices", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    auto s = store.session(req.path_params.at("id"));
    json out = json::array();
    for (const auto& slice : s->slices()) out.push_back(wire::slice(slice, s->id()));
    send_json(res, {{"slices", out}});
  }));

  server.Get("/sessions/:id/snapshot", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    auto s = store.session(req.path_params.at("id"));
    res.set_content(snapshot_to_string(s->snapshot()), "application/json");
  }));

  server.Get("/images/:image_id", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    const auto& id = req.path_params.at("image_id");
    const auto row = store.corpus().matrix.row_of(id);
    send_json(res, store.corpus().records.at(row));
  }));

  server.Get("/slices/:sid", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    const auto& sid = req.path_params.at("sid");
    auto s = store.owner(sid);
    send_json(res, wire::slice(s->slice(sid), s->id()));
  }));

  server.Patch("/slices/:sid", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    const auto& sid = req.path_params.at("sid");
    auto s = store.owner(sid);
    const auto body = parse_body(req);
    const auto add = field<std::vector<std::string>>(body, "add", {});
    const auto remove = field<std::vector<std::string>>(body, "remove", {});
    std::optional<std::string> name;
    if (body.contains("name") && !body.at("name").is_null()) name = field<std::string>(body, "name", "");
    auto slice = s->update_slice(sid, add, remove, std::move(name), store.now());
    send_json(res, wire::slice(slice, s->id()));
  }));

  server.Get("/slices/:sid/recommendations", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    const auto& sid = req.path_params.at("sid");
    auto s = store.owner(sid);
    const auto kind = parse_recommendation_kind(req.has_param("kind") ? req.get_param_value("kind") : "similar");
    const auto slice = s->slice(sid);
    const auto rec = recommend(slice, s->clusters(), kind);
    send_json(res, wire::recommendation(rec, slice, s->clusters()));
  }));

  server.Get("/slices/:sid/correlation", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    const auto& sid = req.path_params.at("sid");
    auto s = store.owner(sid);
    const auto report = s->correlation(sid);
    auto body = wire::correlation(report, sid);
    if (req.has_param("outliers")) {
      long long m = 0;
      try {
        m = std::stoll(req.get_param_value("outliers"));
      } catch (const std::exception&) {
        fail(ErrorCode::invalid_argument, "outliers must be a positive integer");
      }
      if (m < 1) fail(ErrorCode::invalid_argument, "outliers must be a positive integer");
      body["outliers"] = report.fit_defined ? json(outlier_candidates(report, static_cast<std::size_t>(m)))
                                            : json::array();
    }
    send_json(res, body);
  }));
}

}  // namespace vlslice::api
