#include "sg/streaming.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "sg/errors.hpp"

using nlohmann::json;

namespace sg {

const char* to_string(AdaptationMode m) {
  return m == AdaptationMode::kTune ? "tune" : "frozen";
}

AdaptationMode adaptation_mode_from_string(std::string_view s) {
  if (s == "tune") return AdaptationMode::kTune;
  if (s == "frozen") return AdaptationMode::kFrozen;
  throw ConfigError("unknown adaptation mode: " + std::string(s));
}

std::string format_emission(const EmittedPrediction& p) {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "{\"s\":%.6f,\"e\":%.6f,\"score\":%.6f,\"emit_time\":%.6f}",
                p.start, p.end, p.score, p.emit_time);
  return buf;
}

void EmissionLog::append(const EmittedPrediction& p) {
  if (!(p.start < p.end)) {
    throw ValidationError("emission: start must precede end");
  }
  if (!(p.score > 0.0) || p.score > 1.0) {
    throw ValidationError("emission: score must lie in (0, 1]");
  }
  std::lock_guard<std::mutex> lock(mu_);
  if (!entries_.empty() && p.emit_time < last_time_) {
    throw ValidationError("emission: emit_time must be non-decreasing");
  }
  chain_ = fnv1a64(format_emission(p), chain_);
  entries_.push_back(p);
  last_time_ = p.emit_time;
}

std::size_t EmissionLog::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size();
}

std::vector<EmittedPrediction> EmissionLog::snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_;
}

std::uint64_t EmissionLog::chain_hash() const {
  std::lock_guard<std::mutex> lock(mu_);
  return chain_;
}

std::uint64_t emission_chain_hash(const std::vector<EmittedPrediction>& entries) {
  std::uint64_t h = kFnvOffset;
  for (const EmittedPrediction& p : entries) h = fnv1a64(format_emission(p), h);
  return h;
}

void write_emission_log(const std::vector<EmittedPrediction>& entries,
                        const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  for (const EmittedPrediction& p : entries) f << format_emission(p) << "\n";
  if (!f) throw IoError("short write: " + path);
}

std::vector<EmittedPrediction> read_emission_log(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<EmittedPrediction> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      EmittedPrediction p;
      p.start = j.at("s").get<double>();
      p.end = j.at("e").get<double>();
      p.score = j.at("score").get<double>();
      p.emit_time = j.at("emit_time").get<double>();
      out.push_back(p);
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) +
                            ": bad emission record: " + e.what());
    }
    if (!(out.back().start < out.back().end)) {
      throw ValidationError(path + ":" + std::to_string(lineno) +
                            ": emission start must precede end");
    }
  }
  return out;
}

WindowFeatures make_window(const Matrix& snippets, int last,
                           const ModelConfig& cfg) {
  if (last < 0 || last >= snippets.rows()) {
    throw UsageError("make_window: snippet index out of range");
  }
  if (snippets.cols() != cfg.video_dim) {
    throw ConfigError("make_window: snippet width " +
                      std::to_string(snippets.cols()) + " != video_dim " +
                      std::to_string(cfg.video_dim));
  }
  const int k = cfg.window_snippets;
  WindowFeatures w;
  w.snippets = Matrix(k, cfg.video_dim);
  w.valid.assign(k, 0);
  w.fresh.assign(k, 0);
  const int first = std::max(0, last - k + 1);
  for (int s = first; s <= last; ++s) {
    const int r = k - 1 - (last - s);
    w.snippets.set_row(r, snippets.row(s));
    w.valid[r] = 1;
  }
  w.fresh[k - 1] = 1;
  w.window_end = (last + 1) * cfg.snippet_seconds;
  return w;
}

StreamSession::StreamSession(const ModelWeights* weights,
                             const ModelConfig& cfg, QueryBundle query,
                             StreamConfig stream_cfg)
    : weights_(weights),
      cfg_(cfg),
      query_(std::move(query)),
      stream_cfg_(std::move(stream_cfg)) {
  if (weights_ == nullptr) throw ConfigError("stream: null model weights");
  cfg_.validate();
  query_.validate(cfg_);
  state_ = make_state(cfg_, *weights_);
}

void StreamSession::set_adaptation_mode(AdaptationMode mode) {
  if (next_ != 0 && mode != stream_cfg_.mode) {
    throw UsageError("stream " + stream_cfg_.stream_id +
                     ": adaptation mode is fixed once streaming starts");
  }
  stream_cfg_.mode = mode;
}

std::vector<EmittedPrediction> StreamSession::advance(int snippet_index,
                                                      const Vec& features) {
  if (snippet_index != next_) {
    throw ProtocolError("stream " + stream_cfg_.stream_id +
                        ": expected snippet " + std::to_string(next_) +
                        ", got " + std::to_string(snippet_index));
  }
  if (static_cast<int>(features.size()) != cfg_.video_dim) {
    throw ConfigError("stream " + stream_cfg_.stream_id + ": feature width " +
                      std::to_string(features.size()) + " != video_dim " +
                      std::to_string(cfg_.video_dim));
  }
  if (!all_finite(features)) {
    throw ValidationError("stream " + stream_cfg_.stream_id +
                          ": non-finite snippet features at index " +
                          std::to_string(snippet_index));
  }
  history_.push_back(features);
  ++stats_.computed;  // the fresh snippet always costs one feature ingest

  const int k = cfg_.window_snippets;
  WindowFeatures w;
  w.snippets = Matrix(k, cfg_.video_dim);
  w.valid.assign(k, 0);
  w.fresh.assign(k, 0);
  const int first = std::max(0, snippet_index - k + 1);
  for (int s = first; s <= snippet_index; ++s) {
    const int r = k - 1 - (snippet_index - s);
    w.snippets.set_row(r, history_[s]);
    w.valid[r] = 1;
    if (s < snippet_index) {
      // Overlapping rows: served from the cache, or recomputed when caching
      // is off. Either way the bytes are identical; only the counters move.
      if (stream_cfg_.cache_enabled) {
        ++stats_.reused;
      } else {
        ++stats_.computed;
      }
    }
  }
  w.fresh[k - 1] = 1;
  const double t = (snippet_index + 1) * cfg_.snippet_seconds;
  w.window_end = t;

  const bool adapt = stream_cfg_.mode == AdaptationMode::kTune;
  const StepOutput out =
      forward_step(*weights_, cfg_, query_, w, state_, nullptr, adapt);

  std::vector<EmittedPrediction> emitted;
  for (const ScoredInterval& iv :
       select_predictions(out.refined, t, cfg_.anchors, cfg_.snippet_seconds,
                          cfg_.score_threshold)) {
    EmittedPrediction p;
    p.start = iv.start;
    p.end = iv.end;
    p.score = iv.score;
    p.emit_time = t;
    log_.append(p);
    emitted.push_back(p);
  }
  ++next_;
  return emitted;
}

std::vector<EmittedPrediction> run_stream(StreamSession& session,
                                          const Matrix& snippets) {
  if (session.next_snippet() != 0) {
    throw UsageError("run_stream: session already advanced");
  }
  for (int i = 0; i < snippets.rows(); ++i) {
    session.advance(i, snippets.row_vec(i));
  }
  return session.log().snapshot();
}

}  // namespace sg
