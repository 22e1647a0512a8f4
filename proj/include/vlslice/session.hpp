#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "vlslice/affinity.hpp"
#include "vlslice/clustering.hpp"
#include "vlslice/embedding_store.hpp"
#include "vlslice/errors.hpp"
#include "vlslice/eval_harness.hpp"
#include "vlslice/slicing.hpp"
#include "vlslice/text_encoder.hpp"
#include "vlslice/validation.hpp"

namespace vlslice {

using Clock = std::function<std::int64_t()>;  // unix milliseconds

inline Clock system_clock() {
  return [] {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
  };
}

struct SessionDefaults {
  std::size_t k = 3000;
  ClusteringConfig clustering;
  std::size_t histogram_bins = 20;
};

/// One analyst's query with its immutable clustering and mutable slices/view.
///
/// Working set, profile and clusters never change after construction. Slices
/// and the cluster view sit behind a shared_mutex: mutations are exclusive,
/// reads shared.
class Session {
 public:
  Session(std::string id, std::shared_ptr<const Corpus> corpus, Query query, ClusteringConfig cfg,
          std::int64_t created_at, TextEncoder& encoder)
      : id_(std::move(id)), corpus_(std::move(corpus)), query_(std::move(query)), cfg_(cfg),
        created_at_(created_at) {
    if (query_.baseline.empty() || query_.augmented.empty()) {
      fail(ErrorCode::invalid_argument, "baseline and augmented captions must be non-empty");
    }
    const auto& m = corpus_->matrix;
    if (query_.k < 1 || query_.k > m.count()) {
      fail(ErrorCode::invalid_argument,
           "k must lie in [1, " + std::to_string(m.count()) + "], got " + std::to_string(query_.k));
    }
    cfg_.validate();
    const auto baseline = caption_embedding(encoder, query_.baseline);
    const auto augmented = caption_embedding(encoder, query_.augmented);
    ws_ = select_working_set(m, baseline, query_.k, query_.baseline);
    profile_ = delta_c(m, ws_, baseline, augmented);
    clusters_ = agglomerate(ws_, profile_, m, cfg_);
    membership_ = cluster_membership(clusters_);
    context_.emplace(m, ws_, profile_);
  }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const noexcept { return id_; }
  const Query& query() const noexcept { return query_; }
  const ClusteringConfig& clustering_config() const noexcept { return cfg_; }
  const Corpus& corpus() const noexcept { return *corpus_; }
  const WorkingSet& working_set() const noexcept { return ws_; }
  const AffinityProfile& profile() const noexcept { return profile_; }
  const std::vector<Cluster>& clusters() const noexcept { return clusters_; }
  const SliceContext& context() const noexcept { return *context_; }
  std::int64_t created_at() const noexcept { return created_at_; }

  const Cluster& cluster(std::size_t cluster_id) const {
    if (cluster_id >= clusters_.size()) {
      fail(ErrorCode::not_found, "unknown cluster " + std::to_string(cluster_id), std::to_string(cluster_id));
    }
    return clusters_[cluster_id];
  }

  std::optional<std::size_t> cluster_of(const std::string& image_id) const {
    auto it = membership_.find(image_id);
    if (it == membership_.end()) return std::nullopt;
    return it->second;
  }

  /// Unit embedding for `text`, cached per exact string.
  Embedding caption_embedding(TextEncoder& encoder, const std::string& text) {
    {
      std::lock_guard lock(cache_mutex_);
      if (auto it = caption_cache_.find(text); it != caption_cache_.end()) return it->second;
    }
    auto raw = encoder.encode_one(text);
    if (raw.size() != corpus_->matrix.dim()) {
      fail(ErrorCode::dimension_mismatch, "text encoder produced dim " + std::to_string(raw.size()) +
                                              ", corpus has " + std::to_string(corpus_->matrix.dim()));
    }
    auto unit = normalized(raw);
    std::lock_guard lock(cache_mutex_);
    return caption_cache_.emplace(text, std::move(unit)).first->second;
  }

  // View state ---------------------------------------------------------------

  ClusterView set_view(SortKey key, std::vector<RangeFilter> filters) {
    std::unique_lock lock(mutex_);
    view_ = make_view(clusters_, key, std::move(filters), text_scores_);
    return view_;
  }

  ClusterView view() const {
    std::shared_lock lock(mutex_);
    return view_;
  }

  std::vector<ClusterScore> search(TextEncoder& encoder, const std::string& text) {
    if (text.empty()) fail(ErrorCode::invalid_argument, "search text must be non-empty");
    const auto embedding = caption_embedding(encoder, text);
    auto scores = rerank_by_text(clusters_, corpus_->matrix, embedding);
    std::unique_lock lock(mutex_);
    text_scores_ = scores;
    view_ = make_view(clusters_, SortKey::text_relevance, view_.filters, text_scores_);
    return scores;
  }

  // Slices -------------------------------------------------------------------

  Slice add_slice(std::string slice_id, std::string name, std::span<const std::string> seed, std::int64_t now) {
    auto slice = create_slice(*context_, std::move(slice_id), std::move(name), seed, now);
    std::unique_lock lock(mutex_);
    slice_order_.push_back(slice.slice_id);
    return slices_.emplace(slice.slice_id, std::move(slice)).first->second;
  }

  Slice update_slice(const std::string& slice_id, std::span<const std::string> add,
                     std::span<const std::string> remove, std::optional<std::string> rename, std::int64_t now) {
    std::unique_lock lock(mutex_);
    auto& slice = find_slice(slice_id);
    Slice updated = slice;
    mutate_slice(updated, *context_, add, remove, now, std::move(rename));
    slice = updated;
    return updated;
  }

  Slice slice(const std::string& slice_id) const {
    std::shared_lock lock(mutex_);
    return find_slice(slice_id);
  }

  std::vector<Slice> slices() const {
    std::shared_lock lock(mutex_);
    std::vector<Slice> out;
    out.reserve(slice_order_.size());
    for (const auto& id : slice_order_) out.push_back(slices_.at(id));
    return out;
  }

  Recommendation recommendations(const std::string& slice_id, RecommendationKind kind) const {
    return recommend(slice(slice_id), clusters_, kind);
  }

  CorrelationReport correlation(const std::string& slice_id) const {
    return correlation_report(slice(slice_id), ws_, profile_, corpus_->matrix);
  }

  SessionSnapshot snapshot() const {
    const auto all = slices();
    return export_snapshot(query_, ws_, all, created_at_);
  }

 private:
  Slice& find_slice(const std::string& slice_id) {
    auto it = slices_.find(slice_id);
    if (it == slices_.end()) fail(ErrorCode::not_found, "unknown slice '" + slice_id + "'", slice_id);
    return it->second;
  }

  const Slice& find_slice(const std::string& slice_id) const {
    auto it = slices_.find(slice_id);
    if (it == slices_.end()) fail(ErrorCode::not_found, "unknown slice '" + slice_id + "'", slice_id);
    return it->second;
  }

  std::string id_;
  std::shared_ptr<const Corpus> corpus_;
  Query query_;
  ClusteringConfig cfg_;
  std::int64_t created_at_;
  WorkingSet ws_;
  AffinityProfile profile_;
  std::vector<Cluster> clusters_;
  std::unordered_map<std::string, std::size_t> membership_;
  std::optional<SliceContext> context_;

  mutable std::shared_mutex mutex_;
  ClusterView view_;
  std::vector<ClusterScore> text_scores_;
  std::unordered_map<std::string, Slice> slices_;
  std::vector<std::string> slice_order_;

  std::mutex cache_mutex_;
  std::map<std::string, Embedding> caption_cache_;
};

/// In-memory registry of sessions and the slices they own. Ids are
/// sequential ("s1", "sl1", ...) so identical request sequences produce
/// identical ids.
class SessionStore {
 public:
  SessionStore(std::shared_ptr<const Corpus> corpus, std::shared_ptr<TextEncoder> encoder,
               SessionDefaults defaults = {}, Clock clock = system_clock())
      : corpus_(std::move(corpus)), encoder_(std::move(encoder)), defaults_(defaults), clock_(std::move(clock)) {}

  const Corpus& corpus() const noexcept { return *corpus_; }
  const SessionDefaults& defaults() const noexcept { return defaults_; }
  TextEncoder& encoder() noexcept { return *encoder_; }
  std::int64_t now() const { return clock_(); }

  /// Runs the full query pipeline on the caller's thread; the store lock is
  /// only taken to register the finished session.
  std::shared_ptr<Session> create(Query query, std::optional<ClusteringConfig> cfg = std::nullopt) {
    const auto id = "s" + std::to_string(++session_counter_);
    auto session = std::make_shared<Session>(id, corpus_, std::move(query), cfg.value_or(defaults_.clustering),
                                             clock_(), *encoder_);
    session->set_view(SortKey::mean_dc_desc, {});
    std::lock_guard lock(mutex_);
    sessions_.emplace(id, session);
    return session;
  }

  std::shared_ptr<Session> session(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(ErrorCode::not_found, "unknown session '" + id + "'", id);
    return it->second;
  }

  Slice create_slice(const std::string& session_id, std::string name, std::span<const std::string> seed) {
    auto s = session(session_id);
    std::lock_guard create_lock(slice_create_mutex_);
    const auto slice_id = "sl" + std::to_string(slice_counter_ + 1);
    auto slice = s->add_slice(slice_id, std::move(name), seed, clock_());
    ++slice_counter_;
    std::lock_guard lock(mutex_);
    slice_owner_.emplace(slice_id, session_id);
    return slice;
  }

  /// Session owning `slice_id`.
  std::shared_ptr<Session> owner(const std::string& slice_id) const {
    std::string session_id;
    {
      std::lock_guard lock(mutex_);
      auto it = slice_owner_.find(slice_id);
      if (it == slice_owner_.end()) fail(ErrorCode::not_found, "unknown slice '" + slice_id + "'", slice_id);
      session_id = it->second;
    }
    return session(session_id);
  }

 private:
  std::shared_ptr<const Corpus> corpus_;
  std::shared_ptr<TextEncoder> encoder_;
  SessionDefaults defaults_;
  Clock clock_;

  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::string> slice_owner_;
  std::atomic<std::uint64_t> session_counter_{0};
  std::mutex slice_create_mutex_;
  std::uint64_t slice_counter_ = 0;
};

}  // namespace vlslice
