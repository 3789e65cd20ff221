#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sg/attention.hpp"
#include "sg/interval.hpp"
#include "sg/matrix.hpp"
#include "sg/mixer.hpp"
#include "sg/numerics.hpp"
#include "sg/param_memory.hpp"

namespace sg {

enum class Modality { kText, kImage, kSegment };

const char* to_string(Modality m);
Modality modality_from_string(std::string_view s);

struct AnchorConfig {
  int count = 4;
  double longest_snippets = 8.0;  // halved per anchor: 8, 4, 2, 1

  void validate() const;
  std::vector<double> lengths_snippets() const;
  std::vector<double> lengths_seconds(double snippet_seconds) const;
};

struct ModelConfig {
  int feature_dim = 16;   // shared width D after modality projection
  int video_dim = 16;     // raw snippet feature width
  int text_dim = 16;
  int image_dim = 16;
  int segment_dim = 16;
  int window_snippets = 16;      // sliding window length K
  double snippet_seconds = 2.0;  // stride per stream step
  int fusion_attn_layers = 2;
  int fusion_blocks = 2;  // residual sequence-mixing blocks after fusion
  int anchor_attn_layers = 2;
  AnchorConfig anchors;
  double score_threshold = 0.5;  // foreground cutoff for emitting predictions
  MixerKind mixer = MixerKind::kParametricMemory;
  int memory_hidden = 0;  // inner memory width; 0 → feature_dim

  int hidden_dim() const { return memory_hidden > 0 ? memory_hidden : feature_dim; }
  int modality_dim(Modality m) const;
  void validate() const;
};

// One hybrid query: any non-empty subset of {text, image, segment}, each a
// (length × modality_dim) feature sequence. Assembly order is canonical
// (text, image, segment) regardless of the order parts were added.
struct QueryPart {
  Modality modality = Modality::kText;
  Matrix features{0, 0};
};

struct QueryBundle {
  std::vector<QueryPart> parts;
  void validate(const ModelConfig& cfg) const;
};

// Current sliding window. Early windows are left-padded with zero rows;
// `valid` marks real rows (a contiguous suffix), `fresh` the rows whose
// snippet is being seen for the first time — only those write memory.
struct WindowFeatures {
  Matrix snippets{0, 0};  // K × video_dim
  std::vector<std::uint8_t> valid;
  std::vector<std::uint8_t> fresh;
  double window_end = 0.0;  // seconds

  void validate(const ModelConfig& cfg) const;
  int first_valid() const;
};

struct AnchorOutput {
  double fg = 0.0;   // foreground probability
  double bg = 0.0;   // background probability (fg + bg = 1)
  double log_len = 0.0;
  double end_offset = 0.0;
};

struct StepPrediction {
  std::vector<AnchorOutput> anchors;
};

struct ModelWeights {
  Matrix video_proj{0, 0};
  Matrix text_proj{0, 0};
  Matrix image_proj{0, 0};
  Matrix segment_proj{0, 0};
  Vec text_token;
  Vec image_token;
  Vec segment_token;
  std::vector<AttentionParams> fusion_attn;
  std::vector<MixerWeights> fusion_mixers;
  Matrix anchor_embed{0, 0};  // count × D
  std::vector<AttentionParams> anchor_attn;
  Matrix cls_head{0, 0};  // D × 2
  Vec cls_bias;
  Matrix reg_head{0, 0};  // D × 2
  Vec reg_bias;
  Matrix refine_input_proj{0, 0};  // 4 × D, lifts (fg, bg, log_len, end_offset)
  Vec refine_input_bias;
  Matrix refine_anchor_proj{0, 0};  // D × D
  MixerWeights refine_mixer;
  Matrix refine_head{0, 0};  // D × 4
  Vec refine_head_bias;

  static ModelWeights init(const ModelConfig& cfg, Rng& rng);
  static ModelWeights zeros_like(const ModelWeights& other);
};

// Flat view of every trainable tensor, in a stable order shared by the
// optimizer, gradient clipping, and checkpoints. cols == 0 marks a vector.
struct ParamRef {
  std::string name;
  double* data = nullptr;
  std::size_t size = 0;
  int rows = 0;
  int cols = 0;
};

std::vector<ParamRef> param_refs(ModelWeights& w);
std::uint64_t weights_hash(const ModelWeights& w);

// All mutable per-stream state: one mixer state per fusion block plus the
// refinement stage's state. Single-owner; reset at every stream start.
struct ModelState {
  std::vector<MixerState> fusion;
  MixerState refine;

  void reset();
  std::uint64_t content_hash() const;
};

ModelState make_state(const ModelConfig& cfg, const ModelWeights& w);

// Caches for one mixer application over a row sequence.
struct MixerTokenCache {
  Matrix memory_used{0, 0};  // parametric memory: matrix the read saw
  Vec hidden_used;           // recurrent: state the read saw
  MemoryReadCache pml_read;
  RecurrentReadCache rec_read;
  bool wrote = false;
};

struct MixerSeqCache {
  Matrix input{0, 0};   // rows fed to the sublayer
  Matrix output{0, 0};  // sublayer outputs (before the residual add)
  std::vector<MixerTokenCache> tokens;
  AttentionCache attn;  // window-attention kind only
};

// Everything backward_step and replay_step need from one forward pass.
struct StepCache {
  QueryBundle query;
  WindowFeatures window;
  int pad_rows = 0;  // leading zero rows in the window

  struct BundleSpan {
    Modality modality;
    int begin = 0;  // row of the modality token in the assembled matrix
    int rows = 0;   // token row + feature rows
  };
  std::vector<BundleSpan> layout;
  Matrix bundle{0, 0};       // assembled query sequence, n_q × D
  Matrix window_proj{0, 0};  // valid rows only, n_v × D

  std::vector<Matrix> fusion_attn_inputs;
  std::vector<AttentionCache> fusion_attn;
  std::vector<MixerSeqCache> fusion_blocks;
  Matrix fused{0, 0};  // valid rows only, n_v × D

  std::vector<Matrix> anchor_attn_inputs;
  std::vector<AttentionCache> anchor_attn;
  Matrix anchor_feat{0, 0};  // N × D

  std::vector<Vec> cls_logits;   // per anchor, length 2
  std::vector<Vec> cls_probs;
  std::vector<Vec> reg_out;      // per anchor, length 2

  std::vector<Vec> refine_concat;    // per anchor, length 4
  std::vector<Vec> refine_lift;      // per anchor, D
  std::vector<Vec> refine_anchor;    // per anchor, D (projected anchor feature)
  Matrix refine_combined{0, 0};      // N × D rows entering the mixer
  MixerSeqCache refine_mixer;
  Matrix refine_out{0, 0};           // N × D (combined + mixer output)
  std::vector<Vec> refine_logits;    // per anchor, length 4
  std::vector<Vec> refine_cls_probs; // per anchor, length 2

  StepPrediction raw;
  StepPrediction refined;
};

struct StepOutput {
  Matrix fused{0, 0};        // K × D; padded rows stay zero
  Matrix anchor_feat{0, 0};  // N × D
  StepPrediction raw;
  StepPrediction refined;
};

// One stream step: fuse the window with the query, decode anchors, refine.
// Mutates `state` (memory writes for fresh window rows and for every anchor
// in the refinement stage) unless `adapt` is false, in which case all writes
// are skipped and reads see the state as-is. Pass `cache` to enable
// backward_step/replay_step.
StepOutput forward_step(const ModelWeights& w, const ModelConfig& cfg,
                        const QueryBundle& query, const WindowFeatures& window,
                        ModelState& state, StepCache* cache = nullptr,
                        bool adapt = true);

// Re-runs the forward computation of a recorded step with every memory/state
// read pinned to the snapshot the live pass saw; performs no writes. Under
// this replay, finite differences of the loss w.r.t. any weight match the
// analytic stop-gradient backward.
StepOutput replay_step(const ModelWeights& w, const ModelConfig& cfg,
                       const StepCache& cache);

// Loss gradients w.r.t. the step outputs. cls entries differentiate the
// post-softmax (fg, bg) pair; reg entries the raw (log_len, end_offset).
// d_anchor_feat may be empty (treated as zero).
struct StepGrad {
  std::vector<std::array<double, 2>> d_raw_cls;
  std::vector<std::array<double, 2>> d_raw_reg;
  std::vector<std::array<double, 2>> d_ref_cls;
  std::vector<std::array<double, 2>> d_ref_reg;
  Matrix d_anchor_feat{0, 0};
};

// Manual chain rule through the whole step, accumulating into `grads`
// (shape-matched via ModelWeights::zeros_like). Memory/state evolution is
// stop-gradiented: no gradient crosses a write.
void backward_step(const ModelWeights& w, const ModelConfig& cfg,
                   const StepCache& cache, const StepGrad& upstream,
                   ModelWeights& grads);

// Anchor geometry: an anchor of length L ending at t, adjusted by the
// regression pair, covers (e − L·exp(log_len), e) with e = t + L·end_offset.
TimeInterval anchor_interval(double t, double length_seconds, double log_len,
                             double end_offset);
// Inverse mapping; exact round-trip up to floating point.
void interval_offsets(double t, double length_seconds, const TimeInterval& iv,
                      double& log_len, double& end_offset);

struct ScoredInterval {
  double start = 0.0;
  double end = 0.0;
  double score = 0.0;
};

// Thresholded readout of one step: anchors with refined foreground
// probability above `threshold` become intervals. End times are allowed at
// most one anchor length of lookahead past t; starts clamp to 0; degenerate
// results are dropped.
std::vector<ScoredInterval> select_predictions(const StepPrediction& refined,
                                               double t,
                                               const AnchorConfig& anchors,
                                               double snippet_seconds,
                                               double threshold);

}  // namespace sg
