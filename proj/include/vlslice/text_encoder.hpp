#pragma once

#include <chrono>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "vlslice/embedding_store.hpp"
#include "vlslice/errors.hpp"

namespace vlslice {

/// Maps caption strings into the corpus embedding space.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::vector<Embedding> encode(std::span<const std::string> texts) = 0;

  Embedding encode_one(const std::string& text) {
    auto out = encode(std::span<const std::string>(&text, 1));
    if (out.size() != 1) fail(ErrorCode::unavailable, "text encoder returned no embedding");
    return std::move(out.front());
  }
};

/// Hermetic provider backed by a JSON object {text: [floats]}.
class FixtureTextEncoder final : public TextEncoder {
 public:
  explicit FixtureTextEncoder(std::map<std::string, Embedding> table) : table_(std::move(table)) {}

  static FixtureTextEncoder from_json(const nlohmann::json& j) {
    try {
      return FixtureTextEncoder(j.get<std::map<std::string, Embedding>>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::format, std::string("fixture provider must map text to float arrays: ") + e.what());
    }
  }

  static FixtureTextEncoder from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::not_found, "cannot open text fixture '" + path + "'", path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::format, "text fixture '" + path + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
  }

  std::vector<Embedding> encode(std::span<const std::string> texts) override {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
      auto it = table_.find(t);
      if (it == table_.end()) fail(ErrorCode::invalid_argument, "text '" + t + "' is not in the fixture", t);
      out.push_back(it->second);
    }
    return out;
  }

 private:
  std::map<std::string, Embedding> table_;
};

/// Remote provider: POST {base}/encode {"texts": [...]} -> {"dim": d, "embeddings": [[...]]}.
class HttpTextEncoder final : public TextEncoder {
 public:
  HttpTextEncoder(std::string base_url, std::chrono::milliseconds timeout)
      : base_url_(std::move(base_url)), timeout_(timeout) {}

  std::vector<Embedding> encode(std::span<const std::string> texts) override {
    httplib::Client client(base_url_);
    const auto secs = timeout_.count() / 1000;
    const auto usecs = (timeout_.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    const nlohmann::json body{{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
    auto res = client.Post("/encode", body.dump(), "application/json");
    if (!res) {
      fail(ErrorCode::unavailable, "text encoder at " + base_url_ + " unreachable: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      fail(ErrorCode::unavailable, "text encoder returned HTTP " + std::to_string(res->status));
    }
    try {
      const auto reply = nlohmann::json::parse(res->body);
      const auto dim = reply.at("dim").get<std::size_t>();
      auto embeddings = reply.at("embeddings").get<std::vector<Embedding>>();
      if (embeddings.size() != texts.size()) {
        fail(ErrorCode::unavailable, "text encoder returned " + std::to_string(embeddings.size()) +
                                         " embeddings for " + std::to_string(texts.size()) + " texts");
      }
      for (const auto& e : embeddings) {
        if (e.size() != dim) fail(ErrorCode::unavailable, "text encoder reply has inconsistent dim");
      }
      return embeddings;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::unavailable, std::string("malformed text encoder reply: ") + e.what());
    }
  }

 private:
  std::string base_url_;
  std::chrono::milliseconds timeout_;
};

/// "http://..." / "https://..." selects the remote provider, anything else is
/// read as a fixture file path.
inline std::unique_ptr<TextEncoder> make_text_encoder(const std::string& endpoint,
                                                      std::chrono::milliseconds timeout) {
  if (endpoint.rfind("http://", 0) == 0 || endpoint.rfind("https://", 0) == 0) {
    return std::make_unique<HttpTextEncoder>(endpoint, timeout);
  }
  return std::make_unique<FixtureTextEncoder>(FixtureTextEncoder::from_file(endpoint));
}

}  // namespace vlslice
