#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vlslice/errors.hpp"

namespace vlslice {

using Embedding = std::vector<float>;

/// Row-major store of unit-length image embeddings addressed by stable ids.
///
/// Immutable after construction, so a single instance can be shared by every
/// session and request handler.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  /// Validates `raw` (count x dim, row-major) and normalizes every row.
  /// Rows whose norm is already within 1e-6 of one keep their exact bits.
  static EmbeddingMatrix from_raw(std::vector<std::string> ids, std::size_t dim,
                                  std::vector<float> raw) {
    if (dim == 0) fail(ErrorCode::format, "embedding dimension must be positive");
    if (raw.size() != ids.size() * dim) {
      fail(ErrorCode::format, "payload holds " + std::to_string(raw.size()) +
                                  " floats, expected " + std::to_string(ids.size() * dim));
    }
    EmbeddingMatrix m;
    m.dim_ = dim;
    m.index_.reserve(ids.size());
    for (std::size_t row = 0; row < ids.size(); ++row) {
      if (!m.index_.emplace(ids[row], row).second) {
        fail(ErrorCode::duplicate_id, "duplicate image id '" + ids[row] + "'", ids[row]);
      }
    }
    for (std::size_t row = 0; row < ids.size(); ++row) {
      std::span<float> values(raw.data() + row * dim, dim);
      double sq = 0.0;
      for (float v : values) {
        if (!std::isfinite(v)) {
          fail(ErrorCode::format, "non-finite component in row '" + ids[row] + "'", ids[row]);
        }
        sq += static_cast<double>(v) * v;
      }
      const double norm = std::sqrt(sq);
      if (norm == 0.0) {
        fail(ErrorCode::zero_norm, "zero-norm embedding for '" + ids[row] + "'", ids[row]);
      }
      if (std::abs(norm - 1.0) > 1e-6) {
        for (float& v : values) v = static_cast<float>(v / norm);
      }
    }
    m.ids_ = std::move(ids);
    m.data_ = std::move(raw);
    return m;
  }

  std::size_t count() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::span<const float> data() const noexcept { return data_; }

  std::span<const float> row(std::size_t r) const {
    return {data_.data() + r * dim_, dim_};
  }

  bool contains(const std::string& id) const { return index_.contains(id); }

  std::size_t row_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) fail(ErrorCode::not_found, "unknown image id '" + id + "'", id);
    return it->second;
  }

  std::span<const float> embedding(const std::string& id) const { return row(row_of(id)); }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// One manifest line. `meta` is carried through untouched; no algorithm reads it.
struct ImageRecord {
  std::string id;
  std::string uri;
  std::map<std::string, std::string> meta;

  bool operator==(const ImageRecord&) const = default;
};

inline void to_json(nlohmann::json& j, const ImageRecord& r) {
  j = nlohmann::json{{"id", r.id}, {"uri", r.uri}, {"meta", r.meta}};
}

inline void from_json(const nlohmann::json& j, ImageRecord& r) {
  j.at("id").get_to(r.id);
  r.uri = j.value("uri", std::string{});
  r.meta = j.value("meta", std::map<std::string, std::string>{});
}

struct Corpus {
  EmbeddingMatrix matrix;
  std::vector<ImageRecord> records;
};

// ---------------------------------------------------------------------------
// VLSL binary format: "VLSL" | u32 version | u64 count | u32 dim | f32 payload,
// all little-endian.

namespace vlsl {

inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 4 + 4 + 8 + 4;

struct RawFile {
  std::uint64_t count = 0;
  std::uint32_t dim = 0;
  std::vector<float> payload;
};

namespace detail {

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  auto bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<unsigned char>(bits & 0xFF));
    bits >>= 8;
  }
}

template <typename T>
T get_le(const unsigned char* in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = 0;
  for (std::size_t i = sizeof(T); i > 0; --i) bits = (bits << 8) | in[i - 1];
  return std::bit_cast<T>(bits);
}

}  // namespace detail

inline std::vector<unsigned char> encode(std::uint64_t count, std::uint32_t dim,
                                         std::span<const float> payload) {
  if (payload.size() != count * dim) {
    fail(ErrorCode::invalid_argument, "payload size does not match count x dim");
  }
  std::vector<unsigned char> out;
  out.reserve(kHeaderSize + payload.size() * 4);
  for (char c : {'V', 'L', 'S', 'L'}) out.push_back(static_cast<unsigned char>(c));
  detail::put_le(out, kVersion);
  detail::put_le(out, count);
  detail::put_le(out, dim);
  for (float v : payload) detail::put_le(out, v);
  return out;
}

inline RawFile decode(std::span<const unsigned char> bytes) {
  if (bytes.size() < kHeaderSize) fail(ErrorCode::format, "truncated VLSL header");
  if (std::memcmp(bytes.data(), "VLSL", 4) != 0) fail(ErrorCode::format, "bad VLSL magic");
  const auto version = detail::get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kVersion) {
    fail(ErrorCode::format, "unsupported VLSL version " + std::to_string(version));
  }
  RawFile file;
  file.count = detail::get_le<std::uint64_t>(bytes.data() + 8);
  file.dim = detail::get_le<std::uint32_t>(bytes.data() + 16);
  if (file.dim == 0) fail(ErrorCode::format, "VLSL dim must be positive");
  const std::uint64_t payload_bytes = bytes.size() - kHeaderSize;
  if (file.count > payload_bytes / 4 / file.dim || file.count * file.dim * 4 != payload_bytes) {
    fail(ErrorCode::format, "VLSL payload length " + std::to_string(payload_bytes) +
                                " does not match count=" + std::to_string(file.count) +
                                " dim=" + std::to_string(file.dim));
  }
  file.payload.resize(file.count * file.dim);
  const unsigned char* p = bytes.data() + kHeaderSize;
  for (auto& v : file.payload) {
    v = detail::get_le<float>(p);
    p += 4;
  }
  return file;
}

inline std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::not_found, "cannot open '" + path + "'", path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::string& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::invalid_argument, "cannot write '" + path + "'", path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline RawFile read(const std::string& path) { return decode(read_bytes(path)); }

inline void write(const std::string& path, std::uint64_t count, std::uint32_t dim,
                  std::span<const float> payload) {
  write_bytes(path, encode(count, dim, payload));
}

}  // namespace vlsl

inline std::vector<ImageRecord> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::not_found, "cannot open manifest '" + path + "'", path);
  std::vector<ImageRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(nlohmann::json::parse(line).get<ImageRecord>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::format, "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

inline void write_manifest(const std::string& path, std::span<const ImageRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::invalid_argument, "cannot write '" + path + "'", path);
  for (const auto& r : records) out << nlohmann::json(r).dump() << '\n';
}

/// Loads a VLSL payload and binds manifest ids to its rows in order.
inline Corpus load_corpus(const std::string& vlsl_path, const std::string& manifest_path) {
  auto raw = vlsl::read(vlsl_path);
  auto records = read_manifest(manifest_path);
  if (records.size() != raw.count) {
    fail(ErrorCode::format, "manifest has " + std::to_string(records.size()) +
                                " rows but VLSL count is " + std::to_string(raw.count));
  }
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.id);
  Corpus corpus;
  corpus.matrix = EmbeddingMatrix::from_raw(std::move(ids), raw.dim, std::move(raw.payload));
  corpus.records = std::move(records);
  return corpus;
}

inline EmbeddingMatrix load_embeddings(const std::string& vlsl_path,
                                       const std::string& manifest_path) {
  return load_corpus(vlsl_path, manifest_path).matrix;
}

/// Writes the matrix payload only; ids live in the manifest.
inline void write_embeddings(const std::string& vlsl_path, const EmbeddingMatrix& m) {
  vlsl::write(vlsl_path, m.count(), static_cast<std::uint32_t>(m.dim()), m.data());
}

// ---------------------------------------------------------------------------

inline double dot(std::span<const float> u, std::span<const float> v) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += static_cast<double>(u[i]) * v[i];
  return acc;
}

/// Cosine similarity of two unit vectors, clamped to [-1, 1].
inline double cosine_similarity(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) {
    fail(ErrorCode::dimension_mismatch, "dimension mismatch: " + std::to_string(u.size()) +
                                            " vs " + std::to_string(v.size()));
  }
  return std::clamp(dot(u, v), -1.0, 1.0);
}

/// Returns `v` scaled to unit length. Throws on the zero vector.
inline Embedding normalized(std::span<const float> v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  const double norm = std::sqrt(sq);
  if (norm == 0.0 || !std::isfinite(norm)) fail(ErrorCode::zero_norm, "cannot normalize zero vector");
  Embedding out(v.begin(), v.end());
  if (std::abs(norm - 1.0) > 1e-6) {
    for (float& x : out) x = static_cast<float>(x / norm);
  }
  return out;
}

/// Ordered ids of the k images most similar to the baseline caption.
struct WorkingSet {
  std::vector<std::string> image_ids;
  std::vector<std::size_t> rows;  // matrix row of image_ids[i]
  std::string baseline_caption;

  std::size_t k() const noexcept { return image_ids.size(); }
};

/// Rows of `m` ordered by similarity to `target` descending, ties by id ascending.
/// Only the first `k` entries are guaranteed sorted.
inline std::vector<std::size_t> top_k_rows(const EmbeddingMatrix& m, std::span<const float> target,
                                           std::size_t k) {
  if (target.size() != m.dim()) {
    fail(ErrorCode::dimension_mismatch, "caption embedding has dim " + std::to_string(target.size()) +
                                            ", corpus has " + std::to_string(m.dim()));
  }
  std::vector<double> sims(m.count());
  for (std::size_t r = 0; r < m.count(); ++r) sims[r] = cosine_similarity(m.row(r), target);
  std::vector<std::size_t> order(m.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& ids = m.ids();
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (sims[a] != sims[b]) return sims[a] > sims[b];
                      return ids[a] < ids[b];
                    });
  order.resize(k);
  return order;
}

inline WorkingSet select_working_set(const EmbeddingMatrix& m, std::span<const float> baseline_embedding,
                                     std::size_t k, std::string baseline_caption = {}) {
  if (k < 1) fail(ErrorCode::invalid_argument, "k must be at least 1");
  if (k > m.count()) {
    fail(ErrorCode::invalid_argument,
         "k=" + std::to_string(k) + " exceeds corpus size " + std::to_string(m.count()));
  }
  WorkingSet ws;
  ws.baseline_caption = std::move(baseline_caption);
  ws.rows = top_k_rows(m, baseline_embedding, k);
  ws.image_ids.reserve(k);
  for (auto r : ws.rows) ws.image_ids.push_back(m.ids()[r]);
  return ws;
}

}  // namespace vlslice
