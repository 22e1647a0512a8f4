#pragma once

#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "vlslice/clustering.hpp"
#include "vlslice/errors.hpp"

namespace vlslice {

/// Server settings: a JSON file, then VLSLICE_* environment overrides.
///
///   {"corpus": "c.vlsl", "manifest": "c.jsonl", "provider": "http://..." | "fixture.json",
///    "provider_timeout_ms": 5000, "k": 3000, "a": 0.95, "dt": 0.2,
///    "host": "127.0.0.1", "port": 8080, "histogram_bins": 20, "fixed_clock_ms": null}
struct ServerConfig {
  std::string corpus;
  std::string manifest;
  std::string provider;
  long provider_timeout_ms = 5000;
  std::size_t k = 3000;
  ClusteringConfig clustering;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t histogram_bins = 20;
  std::optional<std::int64_t> fixed_clock_ms;  // freeze timestamps for reproducible snapshots

  void validate() const {
    if (corpus.empty()) fail(ErrorCode::invalid_argument, "config: corpus path is required");
    if (manifest.empty()) fail(ErrorCode::invalid_argument, "config: manifest path is required");
    if (provider.empty()) fail(ErrorCode::invalid_argument, "config: provider is required");
    if (provider_timeout_ms <= 0) fail(ErrorCode::invalid_argument, "config: provider_timeout_ms must be positive");
    if (k < 1) fail(ErrorCode::invalid_argument, "config: k must be positive");
    if (port < 0 || port > 65535) fail(ErrorCode::invalid_argument, "config: port out of range");
    if (histogram_bins < 1) fail(ErrorCode::invalid_argument, "config: histogram_bins must be positive");
    clustering.validate();
  }
};

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

inline std::optional<std::string> process_env(const char* name) {
  if (const char* v = std::getenv(name)) return std::string(v);
  return std::nullopt;
}

inline ServerConfig config_from_json(const nlohmann::json& j) {
  ServerConfig c;
  try {
    c.corpus = j.value("corpus", c.corpus);
    c.manifest = j.value("manifest", c.manifest);
    c.provider = j.value("provider", c.provider);
    c.provider_timeout_ms = j.value("provider_timeout_ms", c.provider_timeout_ms);
    c.k = j.value("k", c.k);
    c.clustering.a = j.value("a", c.clustering.a);
    c.clustering.dt = j.value("dt", c.clustering.dt);
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
    if (j.contains("fixed_clock_ms") && !j.at("fixed_clock_ms").is_null()) {
      c.fixed_clock_ms = j.at("fixed_clock_ms").get<std::int64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("config: ") + e.what());
  }
  return c;
}

inline void apply_env_overrides(ServerConfig& c, const EnvLookup& env = process_env) {
  auto number = [](const std::string& name, const std::string& v, auto parse) {
    try {
      return parse(v);
    } catch (const std::exception&) {
      fail(ErrorCode::invalid_argument, "environment variable " + name + " is not a number: '" + v + "'", name);
    }
  };
  if (auto v = env("VLSLICE_CORPUS")) c.corpus = *v;
  if (auto v = env("VLSLICE_MANIFEST")) c.manifest = *v;
  if (auto v = env("VLSLICE_PROVIDER")) c.provider = *v;
  if (auto v = env("VLSLICE_PROVIDER_TIMEOUT_MS")) {
    c.provider_timeout_ms = number("VLSLICE_PROVIDER_TIMEOUT_MS", *v, [](const std::string& s) { return std::stol(s); });
  }
  if (auto v = env("VLSLICE_K")) c.k = number("VLSLICE_K", *v, [](const std::string& s) { return std::stoul(s); });
  if (auto v = env("VLSLICE_A")) c.clustering.a = number("VLSLICE_A", *v, [](const std::string& s) { return std::stod(s); });
  if (auto v = env("VLSLICE_DT")) c.clustering.dt = number("VLSLICE_DT", *v, [](const std::string& s) { return std::stod(s); });
  if (auto v = env("VLSLICE_HOST")) c.host = *v;
  if (auto v = env("VLSLICE_PORT")) c.port = number("VLSLICE_PORT", *v, [](const std::string& s) { return std::stoi(s); });
}

inline ServerConfig load_config(const std::string& path, const EnvLookup& env = process_env) {
  ServerConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::not_found, "cannot open config '" + path + "'", path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::format, "config '" + path + "' is not valid JSON: " + e.what());
    }
    c = config_from_json(j);
  }
  apply_env_overrides(c, env);
  c.validate();
  return c;
}

}  // namespace vlslice
