#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "sg/hash.hpp"
#include "sg/metrics.hpp"
#include "sg/model.hpp"

namespace sg {

// The log entry is exactly what the metrics module consumes.
using EmittedPrediction = Emission;

enum class AdaptationMode { kTune, kFrozen };

const char* to_string(AdaptationMode m);
AdaptationMode adaptation_mode_from_string(std::string_view s);

// Canonical JSONL line for one prediction; also the hash-chain input, so the
// chain is reproducible from a written log file.
std::string format_emission(const EmittedPrediction& p);

// Append-only record of everything a session has committed to. There is no
// mutating accessor: entries can only be appended, and the chain hash over
// the serialized lines extends with each append. One writer, any number of
// concurrent snapshot readers.
class EmissionLog {
 public:
  EmissionLog() = default;
  EmissionLog(const EmissionLog&) = delete;
  EmissionLog& operator=(const EmissionLog&) = delete;

  void append(const EmittedPrediction& p);

  std::size_t size() const;
  std::vector<EmittedPrediction> snapshot() const;
  std::uint64_t chain_hash() const;

 private:
  mutable std::mutex mu_;
  std::vector<EmittedPrediction> entries_;
  std::uint64_t chain_ = kFnvOffset;
  double last_time_ = 0.0;
};

void write_emission_log(const std::vector<EmittedPrediction>& entries,
                        const std::string& path);
std::vector<EmittedPrediction> read_emission_log(const std::string& path);

// Hash-chain over already-serialized entries (e.g. a file snapshot); equals
// EmissionLog::chain_hash() for the same prefix.
std::uint64_t emission_chain_hash(const std::vector<EmittedPrediction>& entries);

// Sliding window ending at snippet `last` (0-based), assembled from the
// feature rows seen so far. Early windows are left-zero-padded; exactly the
// final row is marked fresh.
WindowFeatures make_window(const Matrix& snippets, int last,
                           const ModelConfig& cfg);

struct StreamConfig {
  std::string stream_id = "stream";
  AdaptationMode mode = AdaptationMode::kTune;
  bool cache_enabled = true;
};

struct CacheStats {
  std::int64_t computed = 0;  // feature rows ingested/recomputed
  std::int64_t reused = 0;    // window rows served from the cache
};

// Online inference over one stream: snippets arrive strictly in order, each
// advance runs one model step and appends every above-threshold prediction
// to the log. Owns all per-stream state; the weights are shared and
// immutable, so many sessions may run in parallel against one model.
class StreamSession {
 public:
  StreamSession(const ModelWeights* weights, const ModelConfig& cfg,
                QueryBundle query, StreamConfig stream_cfg = {});

  StreamSession(const StreamSession&) = delete;
  StreamSession& operator=(const StreamSession&) = delete;

  // Feeds the next snippet ([t − stride, t] features) and returns the
  // predictions emitted at this step (already appended to the log).
  std::vector<EmittedPrediction> advance(int snippet_index, const Vec& features);

  // Mode is fixed once streaming starts.
  void set_adaptation_mode(AdaptationMode mode);

  int next_snippet() const { return next_; }
  double stream_time() const { return next_ * cfg_.snippet_seconds; }
  AdaptationMode mode() const { return stream_cfg_.mode; }
  const std::string& stream_id() const { return stream_cfg_.stream_id; }

  const EmissionLog& log() const { return log_; }
  const CacheStats& cache_stats() const { return stats_; }
  std::uint64_t state_hash() const { return state_.content_hash(); }

 private:
  const ModelWeights* weights_;
  ModelConfig cfg_;
  QueryBundle query_;
  StreamConfig stream_cfg_;
  ModelState state_;
  std::vector<Vec> history_;
  EmissionLog log_;
  CacheStats stats_;
  int next_ = 0;
};

// Batch driver: folds advance over all rows of `snippets` on a fresh session
// and returns the final log snapshot.
std::vector<EmittedPrediction> run_stream(StreamSession& session,
                                          const Matrix& snippets);

}  // namespace sg
