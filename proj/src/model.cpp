#include "sg/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <type_traits>

#include "sg/errors.hpp"
#include "sg/hash.hpp"

namespace sg {

const char* to_string(Modality m) {
  switch (m) {
    case Modality::kText: return "text";
    case Modality::kImage: return "image";
    case Modality::kSegment: return "segment";
  }
  throw ConfigError("invalid Modality value");
}

Modality modality_from_string(std::string_view s) {
  if (s == "text") return Modality::kText;
  if (s == "image") return Modality::kImage;
  if (s == "segment") return Modality::kSegment;
  throw ConfigError("unknown modality: " + std::string(s));
}

void AnchorConfig::validate() const {
  if (count < 1) throw ConfigError("anchors: count must be >= 1");
  if (!(longest_snippets > 0.0)) {
    throw ConfigError("anchors: longest length must be > 0");
  }
  const double shortest = longest_snippets / std::pow(2.0, count - 1);
  if (shortest < 1.0) {
    throw ConfigError("anchors: shortest anchor is below one snippet");
  }
}

std::vector<double> AnchorConfig::lengths_snippets() const {
  std::vector<double> out(count);
  double len = longest_snippets;
  for (int n = 0; n < count; ++n) {
    out[n] = len;
    len /= 2.0;
  }
  return out;
}

std::vector<double> AnchorConfig::lengths_seconds(double snippet_seconds) const {
  std::vector<double> out = lengths_snippets();
  for (double& v : out) v *= snippet_seconds;
  return out;
}

int ModelConfig::modality_dim(Modality m) const {
  switch (m) {
    case Modality::kText: return text_dim;
    case Modality::kImage: return image_dim;
    case Modality::kSegment: return segment_dim;
  }
  throw ConfigError("invalid Modality value");
}

void ModelConfig::validate() const {
  if (feature_dim < 1 || video_dim < 1 || text_dim < 1 || image_dim < 1 ||
      segment_dim < 1) {
    throw ConfigError("model: all dimensions must be >= 1");
  }
  if (window_snippets < 1) throw ConfigError("model: window must hold >= 1 snippet");
  if (!(snippet_seconds > 0.0)) throw ConfigError("model: snippet_seconds must be > 0");
  if (fusion_attn_layers < 1 || anchor_attn_layers < 1 || fusion_blocks < 1) {
    throw ConfigError("model: layer counts must be >= 1");
  }
  anchors.validate();
  if (anchors.longest_snippets > window_snippets) {
    throw ConfigError("model: longest anchor exceeds the window");
  }
  if (score_threshold < 0.0 || score_threshold > 1.0) {
    throw ConfigError("model: score_threshold must lie in [0,1]");
  }
  if (memory_hidden < 0) throw ConfigError("model: memory_hidden must be >= 0");
}

void QueryBundle::validate(const ModelConfig& cfg) const {
  if (parts.empty()) throw ValidationError("query: at least one part required");
  bool seen[3] = {false, false, false};
  for (const QueryPart& p : parts) {
    const int idx = static_cast<int>(p.modality);
    if (seen[idx]) {
      throw ValidationError(std::string("query: duplicate ") +
                            to_string(p.modality) + " part");
    }
    seen[idx] = true;
    if (p.features.rows() < 1) {
      throw ValidationError(std::string("query: empty ") +
                            to_string(p.modality) + " part");
    }
    if (p.features.cols() != cfg.modality_dim(p.modality)) {
      throw DimensionError(std::string("query: ") + to_string(p.modality) +
                           " feature width mismatch");
    }
    if (!p.features.all_finite()) {
      throw NumericError("query: non-finite features");
    }
  }
}

int WindowFeatures::first_valid() const {
  for (size_t i = 0; i < valid.size(); ++i) {
    if (valid[i]) return static_cast<int>(i);
  }
  return static_cast<int>(valid.size());
}

void WindowFeatures::validate(const ModelConfig& cfg) const {
  const int k = cfg.window_snippets;
  if (snippets.rows() != k || snippets.cols() != cfg.video_dim) {
    throw DimensionError("window: snippet matrix shape mismatch");
  }
  if (valid.size() != static_cast<size_t>(k) ||
      fresh.size() != static_cast<size_t>(k)) {
    throw DimensionError("window: flag lengths must equal window size");
  }
  bool started = false;
  bool any = false;
  for (int i = 0; i < k; ++i) {
    if (valid[i]) {
      started = true;
      any = true;
    } else if (started) {
      throw ValidationError("window: valid rows must form a suffix (left padding)");
    }
    if (fresh[i] && !valid[i]) {
      throw ValidationError("window: fresh row marked invalid");
    }
  }
  if (!any) throw ValidationError("window: no valid rows");
  if (!snippets.all_finite()) throw NumericError("window: non-finite features");
}

namespace {

const Matrix& modality_proj(const ModelWeights& w, Modality m) {
  switch (m) {
    case Modality::kText: return w.text_proj;
    case Modality::kImage: return w.image_proj;
    case Modality::kSegment: return w.segment_proj;
  }
  throw ConfigError("invalid Modality value");
}

Matrix& modality_proj(ModelWeights& w, Modality m) {
  return const_cast<Matrix&>(modality_proj(static_cast<const ModelWeights&>(w), m));
}

const Vec& modality_token(const ModelWeights& w, Modality m) {
  switch (m) {
    case Modality::kText: return w.text_token;
    case Modality::kImage: return w.image_token;
    case Modality::kSegment: return w.segment_token;
  }
  throw ConfigError("invalid Modality value");
}

Vec& modality_token(ModelWeights& w, Modality m) {
  return const_cast<Vec&>(modality_token(static_cast<const ModelWeights&>(w), m));
}

constexpr Modality kCanonicalOrder[3] = {Modality::kText, Modality::kImage,
                                         Modality::kSegment};

const QueryPart* find_part(const QueryBundle& q, Modality m) {
  for (const QueryPart& p : q.parts) {
    if (p.modality == m) return &p;
  }
  return nullptr;
}

// Canonical assembly: for each present modality in (text, image, segment)
// order, one learned modality token row followed by the projected features.
Matrix assemble_bundle(const ModelWeights& w, const QueryBundle& query,
                       std::vector<StepCache::BundleSpan>& layout) {
  layout.clear();
  int total = 0;
  for (Modality m : kCanonicalOrder) {
    if (const QueryPart* p = find_part(query, m)) {
      layout.push_back({m, total, p->features.rows() + 1});
      total += p->features.rows() + 1;
    }
  }
  const int d = static_cast<int>(w.text_token.size());
  Matrix bundle(total, d);
  for (const StepCache::BundleSpan& span : layout) {
    const QueryPart* p = find_part(query, span.modality);
    bundle.set_row(span.begin, modality_token(w, span.modality));
    const Matrix projected = matmul(p->features, modality_proj(w, span.modality));
    for (int r = 0; r < projected.rows(); ++r) {
      bundle.set_row(span.begin + 1 + r, projected.row(r));
    }
  }
  return bundle;
}

// One residual sequence-mixing sublayer applied to `input` rows. Live mode
// advances `state` (rows flagged fresh write); replay mode pins every read
// to the snapshot recorded in `src`. Returns the sublayer output (the caller
// adds the residual).
Matrix mixer_seq_forward(const MixerWeights& mw,
                         const std::vector<std::uint8_t>& fresh,
                         const Matrix& input, MixerState* state,
                         const MixerSeqCache* src, MixerSeqCache* record) {
  const int n = input.rows();
  Matrix out(n, input.cols());
  if (record) {
    record->input = input;
    record->tokens.assign(n, {});
  }
  switch (mw.kind) {
    case MixerKind::kParametricMemory: {
      for (int i = 0; i < n; ++i) {
        const Vec x = input.row_vec(i);
        bool wrote = false;
        if (state) {
          wrote = fresh[i] != 0;
          if (wrote) memorize(mw.pml, state->memory, x);
        }
        const Matrix& mem =
            state ? state->memory.memory : src->tokens[i].memory_used;
        MemoryReadCache rc;
        const Vec y = read(mw.pml, mem, x, rc);
        out.set_row(i, y);
        if (record) {
          record->tokens[i].memory_used = mem;
          record->tokens[i].pml_read = std::move(rc);
          record->tokens[i].wrote = wrote;
        }
      }
      break;
    }
    case MixerKind::kRecurrent: {
      for (int i = 0; i < n; ++i) {
        const Vec x = input.row_vec(i);
        bool wrote = false;
        if (state) {
          wrote = fresh[i] != 0;
          if (wrote) recurrent_write(mw.recurrent, state->hidden, x);
        }
        const Vec& hidden =
            state ? state->hidden.hidden : src->tokens[i].hidden_used;
        RecurrentReadCache rc;
        const Vec y = recurrent_read(mw.recurrent, hidden, x, &rc);
        out.set_row(i, y);
        if (record) {
          record->tokens[i].hidden_used = hidden;
          record->tokens[i].rec_read = std::move(rc);
          record->tokens[i].wrote = wrote;
        }
      }
      break;
    }
    case MixerKind::kWindowAttention: {
      AttentionCache ac;
      out = attend(mw.attention, input, input, record ? &ac : nullptr);
      if (record) record->attn = std::move(ac);
      break;
    }
  }
  if (record) record->output = out;
  return out;
}

void mixer_seq_backward(const MixerWeights& mw, const MixerSeqCache& c,
                        const Matrix& upstream, MixerWeights& grads,
                        Matrix& d_input) {
  const int n = c.input.rows();
  switch (mw.kind) {
    case MixerKind::kParametricMemory: {
      for (int i = 0; i < n; ++i) {
        const Vec x = c.input.row_vec(i);
        Vec dx(x.size(), 0.0);
        read_path_gradient_accum(mw.pml, c.tokens[i].memory_used, x,
                                 c.tokens[i].pml_read, upstream.row_vec(i),
                                 grads.pml.query_proj, grads.pml.out_proj,
                                 grads.pml.ln_gamma, grads.pml.ln_beta, dx);
        for (size_t j = 0; j < dx.size(); ++j) {
          d_input.at(i, static_cast<int>(j)) += dx[j];
        }
      }
      break;
    }
    case MixerKind::kRecurrent: {
      for (int i = 0; i < n; ++i) {
        const Vec x = c.input.row_vec(i);
        Vec dx(x.size(), 0.0);
        recurrent_read_backward(mw.recurrent, c.tokens[i].hidden_used, x,
                                c.tokens[i].rec_read, upstream.row_vec(i),
                                grads.recurrent.gate_proj,
                                grads.recurrent.out_proj,
                                grads.recurrent.ln_gamma,
                                grads.recurrent.ln_beta, dx);
        for (size_t j = 0; j < dx.size(); ++j) {
          d_input.at(i, static_cast<int>(j)) += dx[j];
        }
      }
      break;
    }
    case MixerKind::kWindowAttention: {
      const AttentionGrads g = attend_backward(mw.attention, c.input, c.input,
                                               c.attn, upstream, grads.attention);
      add_in_place(d_input, g.d_queries);
      add_in_place(d_input, g.d_memory);
      break;
    }
  }
}

template <class W, class Fn>
void visit_attention(const std::string& prefix, W& a, Fn&& fn) {
  fn(prefix + ".query_proj", a.query_proj);
  fn(prefix + ".key_proj", a.key_proj);
  fn(prefix + ".value_proj", a.value_proj);
  fn(prefix + ".out_proj", a.out_proj);
}

template <class W, class Fn>
void visit_mixer(const std::string& prefix, W& m, Fn&& fn) {
  switch (m.kind) {
    case MixerKind::kParametricMemory:
      fn(prefix + ".key_proj", m.pml.key_proj);
      fn(prefix + ".value_proj", m.pml.value_proj);
      fn(prefix + ".query_proj", m.pml.query_proj);
      fn(prefix + ".out_proj", m.pml.out_proj);
      fn(prefix + ".rate_weights", m.pml.rate_weights);
      fn(prefix + ".ln_gamma", m.pml.ln_gamma);
      fn(prefix + ".ln_beta", m.pml.ln_beta);
      break;
    case MixerKind::kRecurrent:
      fn(prefix + ".input_proj", m.recurrent.input_proj);
      fn(prefix + ".gate_proj", m.recurrent.gate_proj);
      fn(prefix + ".out_proj", m.recurrent.out_proj);
      fn(prefix + ".ln_gamma", m.recurrent.ln_gamma);
      fn(prefix + ".ln_beta", m.recurrent.ln_beta);
      break;
    case MixerKind::kWindowAttention:
      visit_attention(prefix, m.attention, fn);
      break;
  }
}

template <class W, class Fn>
void visit_weights(W& w, Fn&& fn) {
  fn("video_proj", w.video_proj);
  fn("text_proj", w.text_proj);
  fn("image_proj", w.image_proj);
  fn("segment_proj", w.segment_proj);
  fn("text_token", w.text_token);
  fn("image_token", w.image_token);
  fn("segment_token", w.segment_token);
  for (size_t l = 0; l < w.fusion_attn.size(); ++l) {
    visit_attention("fusion_attn." + std::to_string(l), w.fusion_attn[l], fn);
  }
  for (size_t b = 0; b < w.fusion_mixers.size(); ++b) {
    visit_mixer("fusion_mixer." + std::to_string(b), w.fusion_mixers[b], fn);
  }
  fn("anchor_embed", w.anchor_embed);
  for (size_t l = 0; l < w.anchor_attn.size(); ++l) {
    visit_attention("anchor_attn." + std::to_string(l), w.anchor_attn[l], fn);
  }
  fn("cls_head", w.cls_head);
  fn("cls_bias", w.cls_bias);
  fn("reg_head", w.reg_head);
  fn("reg_bias", w.reg_bias);
  fn("refine_input_proj", w.refine_input_proj);
  fn("refine_input_bias", w.refine_input_bias);
  fn("refine_anchor_proj", w.refine_anchor_proj);
  visit_mixer("refine_mixer", w.refine_mixer, fn);
  fn("refine_head", w.refine_head);
  fn("refine_head_bias", w.refine_head_bias);
}

}  // namespace

ModelWeights ModelWeights::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const int d = cfg.feature_dim;
  const int dh = cfg.hidden_dim();
  const double token_std = 1.0 / std::sqrt(static_cast<double>(d));

  ModelWeights w;
  w.video_proj = xavier_matrix(cfg.video_dim, d, rng);
  w.text_proj = xavier_matrix(cfg.text_dim, d, rng);
  w.image_proj = xavier_matrix(cfg.image_dim, d, rng);
  w.segment_proj = xavier_matrix(cfg.segment_dim, d, rng);
  w.text_token = gaussian_vec(d, token_std, rng);
  w.image_token = gaussian_vec(d, token_std, rng);
  w.segment_token = gaussian_vec(d, token_std, rng);
  for (int l = 0; l < cfg.fusion_attn_layers; ++l) {
    w.fusion_attn.push_back(AttentionParams::init(d, rng));
  }
  for (int b = 0; b < cfg.fusion_blocks; ++b) {
    w.fusion_mixers.push_back(MixerWeights::init(cfg.mixer, d, dh, rng));
  }
  w.anchor_embed = xavier_matrix(cfg.anchors.count, d, rng);
  for (int l = 0; l < cfg.anchor_attn_layers; ++l) {
    w.anchor_attn.push_back(AttentionParams::init(d, rng));
  }
  w.cls_head = xavier_matrix(d, 2, rng);
  w.cls_bias.assign(2, 0.0);
  w.reg_head = xavier_matrix(d, 2, rng);
  w.reg_bias.assign(2, 0.0);
  w.refine_input_proj = xavier_matrix(4, d, rng);
  w.refine_input_bias.assign(d, 0.0);
  w.refine_anchor_proj = xavier_matrix(d, d, rng);
  w.refine_mixer = MixerWeights::init(cfg.mixer, d, dh, rng);
  w.refine_head = xavier_matrix(d, 4, rng);
  w.refine_head_bias.assign(4, 0.0);
  return w;
}

ModelWeights ModelWeights::zeros_like(const ModelWeights& other) {
  ModelWeights z = other;
  for (const ParamRef& ref : param_refs(z)) {
    std::fill(ref.data, ref.data + ref.size, 0.0);
  }
  return z;
}

std::vector<ParamRef> param_refs(ModelWeights& w) {
  std::vector<ParamRef> out;
  auto add = [&out](const std::string& name, auto& tensor) {
    using T = std::decay_t<decltype(tensor)>;
    if constexpr (std::is_same_v<T, Matrix>) {
      out.push_back({name, tensor.data(), tensor.size(), tensor.rows(),
                     tensor.cols()});
    } else {
      out.push_back({name, tensor.data(), tensor.size(),
                     static_cast<int>(tensor.size()), 0});
    }
  };
  visit_weights(w, add);
  return out;
}

std::uint64_t weights_hash(const ModelWeights& w) {
  auto refs = param_refs(const_cast<ModelWeights&>(w));
  std::uint64_t h = kFnvOffset;
  for (const ParamRef& r : refs) {
    h = fnv1a64(r.name, h);
    h = fnv1a64_bytes(r.data, r.size * sizeof(double), h);
  }
  return h;
}

void ModelState::reset() {
  for (MixerState& s : fusion) s.reset();
  refine.reset();
}

std::uint64_t ModelState::content_hash() const {
  std::uint64_t h = kFnvOffset;
  for (const MixerState& s : fusion) {
    const std::uint64_t sh = s.content_hash();
    h = fnv1a64_bytes(&sh, sizeof(sh), h);
  }
  const std::uint64_t rh = refine.content_hash();
  return fnv1a64_bytes(&rh, sizeof(rh), h);
}

ModelState make_state(const ModelConfig& cfg, const ModelWeights& w) {
  if (w.fusion_mixers.size() != static_cast<size_t>(cfg.fusion_blocks)) {
    throw ConfigError("make_state: weights do not match the configured blocks");
  }
  ModelState s;
  for (const MixerWeights& m : w.fusion_mixers) {
    s.fusion.push_back(make_mixer_state(m));
  }
  s.refine = make_mixer_state(w.refine_mixer);
  return s;
}

namespace {

StepOutput run_step(const ModelWeights& w, const ModelConfig& cfg,
                    const QueryBundle& query, const WindowFeatures& window,
                    ModelState* state, const StepCache* src, StepCache* record,
                    bool adapt) {
  query.validate(cfg);
  window.validate(cfg);
  if (state && state->fusion.size() != w.fusion_mixers.size()) {
    throw UsageError("forward_step: state does not match the model");
  }

  const int d = cfg.feature_dim;
  const int n_anchor = cfg.anchors.count;

  std::vector<StepCache::BundleSpan> layout;
  Matrix bundle = assemble_bundle(w, query, layout);

  const int pad = window.first_valid();
  const int n_valid = cfg.window_snippets - pad;
  Matrix window_rows(n_valid, cfg.video_dim);
  std::vector<std::uint8_t> fresh(n_valid);
  for (int i = 0; i < n_valid; ++i) {
    window_rows.set_row(i, window.snippets.row(pad + i));
    fresh[i] = adapt ? window.fresh[pad + i] : 0;
  }

  Matrix x = matmul(window_rows, w.video_proj);
  if (record) {
    record->query = query;
    record->window = window;
    record->pad_rows = pad;
    record->layout = layout;
    record->bundle = bundle;
    record->window_proj = x;
    record->fusion_attn_inputs.clear();
    record->fusion_attn.clear();
    record->fusion_blocks.clear();
    record->anchor_attn_inputs.clear();
    record->anchor_attn.clear();
  }

  for (size_t l = 0; l < w.fusion_attn.size(); ++l) {
    if (record) record->fusion_attn_inputs.push_back(x);
    AttentionCache ac;
    const Matrix y = attend(w.fusion_attn[l], x, bundle, record ? &ac : nullptr);
    add_in_place(x, y);
    if (record) record->fusion_attn.push_back(std::move(ac));
  }

  for (size_t b = 0; b < w.fusion_mixers.size(); ++b) {
    MixerSeqCache* rec = nullptr;
    if (record) {
      record->fusion_blocks.emplace_back();
      rec = &record->fusion_blocks.back();
    }
    const MixerSeqCache* rep = src ? &src->fusion_blocks[b] : nullptr;
    MixerState* st = state ? &state->fusion[b] : nullptr;
    const Matrix y = mixer_seq_forward(w.fusion_mixers[b], fresh, x, st, rep, rec);
    add_in_place(x, y);
  }
  if (record) record->fused = x;

  Matrix a = w.anchor_embed;
  for (size_t l = 0; l < w.anchor_attn.size(); ++l) {
    if (record) record->anchor_attn_inputs.push_back(a);
    AttentionCache ac;
    const Matrix y = attend(w.anchor_attn[l], a, x, record ? &ac : nullptr);
    add_in_place(a, y);
    if (record) record->anchor_attn.push_back(std::move(ac));
  }
  if (record) record->anchor_feat = a;

  StepOutput out;
  out.raw.anchors.resize(n_anchor);
  if (record) {
    record->cls_logits.clear();
    record->cls_probs.clear();
    record->reg_out.clear();
    record->refine_concat.clear();
    record->refine_lift.clear();
    record->refine_anchor.clear();
    record->refine_logits.clear();
    record->refine_cls_probs.clear();
  }
  Matrix combined(n_anchor, d);
  for (int n = 0; n < n_anchor; ++n) {
    const Vec row = a.row_vec(n);
    const Vec cls_logits = row_times(row, w.cls_head) + w.cls_bias;
    const Vec cls = softmax(cls_logits);
    const Vec reg = row_times(row, w.reg_head) + w.reg_bias;
    out.raw.anchors[n] = {cls[0], cls[1], reg[0], reg[1]};

    const Vec concat = {cls[0], cls[1], reg[0], reg[1]};
    const Vec lift = row_times(concat, w.refine_input_proj) + w.refine_input_bias;
    const Vec aproj = row_times(row, w.refine_anchor_proj);
    const Vec fc = lift + aproj;
    combined.set_row(n, fc);
    if (record) {
      record->cls_logits.push_back(cls_logits);
      record->cls_probs.push_back(cls);
      record->reg_out.push_back(reg);
      record->refine_concat.push_back(concat);
      record->refine_lift.push_back(lift);
      record->refine_anchor.push_back(aproj);
    }
  }

  const std::vector<std::uint8_t> all_fresh(n_anchor, adapt ? 1 : 0);
  MixerSeqCache* rec = record ? &record->refine_mixer : nullptr;
  const MixerSeqCache* rep = src ? &src->refine_mixer : nullptr;
  const Matrix mixed = mixer_seq_forward(w.refine_mixer, all_fresh, combined,
                                         state ? &state->refine : nullptr, rep, rec);
  Matrix refined_rows = combined;
  add_in_place(refined_rows, mixed);
  if (record) {
    record->refine_combined = combined;
    record->refine_out = refined_rows;
  }

  out.refined.anchors.resize(n_anchor);
  for (int n = 0; n < n_anchor; ++n) {
    const Vec logits =
        row_times(refined_rows.row_vec(n), w.refine_head) + w.refine_head_bias;
    const Vec cls = softmax({logits[0], logits[1]});
    out.refined.anchors[n] = {cls[0], cls[1], logits[2], logits[3]};
    if (record) {
      record->refine_logits.push_back(logits);
      record->refine_cls_probs.push_back(cls);
    }
  }

  out.fused = Matrix(cfg.window_snippets, d);
  for (int i = 0; i < n_valid; ++i) out.fused.set_row(pad + i, x.row(i));
  out.anchor_feat = a;
  if (!out.fused.all_finite() || !out.anchor_feat.all_finite()) {
    throw NumericError("forward_step: non-finite activations");
  }
  if (record) {
    record->raw = out.raw;
    record->refined = out.refined;
  }
  return out;
}

}  // namespace

StepOutput forward_step(const ModelWeights& w, const ModelConfig& cfg,
                        const QueryBundle& query, const WindowFeatures& window,
                        ModelState& state, StepCache* cache, bool adapt) {
  return run_step(w, cfg, query, window, &state, nullptr, cache, adapt);
}

StepOutput replay_step(const ModelWeights& w, const ModelConfig& cfg,
                       const StepCache& cache) {
  if (cache.fused.empty()) {
    throw UsageError("replay_step: cache was not recorded");
  }
  return run_step(w, cfg, cache.query, cache.window, nullptr, &cache, nullptr,
                  false);
}

void backward_step(const ModelWeights& w, const ModelConfig& cfg,
                   const StepCache& cache, const StepGrad& upstream,
                   ModelWeights& grads) {
  if (cache.fused.empty() || cache.cls_probs.empty()) {
    throw UsageError("backward_step: cache was not recorded");
  }
  const int n_anchor = cfg.anchors.count;
  const int d = cfg.feature_dim;
  auto pick = [n_anchor](const std::vector<std::array<double, 2>>& v, int i)
      -> std::array<double, 2> {
    if (v.empty()) return {0.0, 0.0};
    if (v.size() != static_cast<size_t>(n_anchor)) {
      throw DimensionError("backward_step: gradient count mismatch");
    }
    return v[i];
  };

  // refined head
  Matrix d_refined_rows(n_anchor, d);
  for (int n = 0; n < n_anchor; ++n) {
    const auto dc = pick(upstream.d_ref_cls, n);
    const auto dr = pick(upstream.d_ref_reg, n);
    const Vec d_cls_logits =
        softmax_backward(cache.refine_cls_probs[n], {dc[0], dc[1]});
    const Vec d_logits = {d_cls_logits[0], d_cls_logits[1], dr[0], dr[1]};
    const Vec row = cache.refine_out.row_vec(n);
    add_in_place(grads.refine_head, outer(row, d_logits));
    axpy(grads.refine_head_bias, 1.0, d_logits);
    d_refined_rows.set_row(n, times_col(w.refine_head, d_logits));
  }

  // residual mixer over anchors
  Matrix d_combined = d_refined_rows;
  mixer_seq_backward(w.refine_mixer, cache.refine_mixer, d_refined_rows,
                     grads.refine_mixer, d_combined);

  // split combined rows into the lifted-prediction and anchor-projection paths
  Matrix d_anchor_feat(n_anchor, d);
  if (!upstream.d_anchor_feat.empty()) {
    if (upstream.d_anchor_feat.rows() != n_anchor ||
        upstream.d_anchor_feat.cols() != d) {
      throw DimensionError("backward_step: d_anchor_feat shape mismatch");
    }
    d_anchor_feat = upstream.d_anchor_feat;
  }
  std::vector<std::array<double, 2>> d_raw_cls(n_anchor), d_raw_reg(n_anchor);
  for (int n = 0; n < n_anchor; ++n) {
    const Vec d_fc = d_combined.row_vec(n);
    const Vec f_row = cache.anchor_feat.row_vec(n);
    add_in_place(grads.refine_anchor_proj, outer(f_row, d_fc));
    {
      const Vec df = times_col(w.refine_anchor_proj, d_fc);
      for (int j = 0; j < d; ++j) d_anchor_feat.at(n, j) += df[j];
    }
    add_in_place(grads.refine_input_proj, outer(cache.refine_concat[n], d_fc));
    axpy(grads.refine_input_bias, 1.0, d_fc);
    const Vec d_concat = times_col(w.refine_input_proj, d_fc);

    const auto dc = pick(upstream.d_raw_cls, n);
    const auto dr = pick(upstream.d_raw_reg, n);
    d_raw_cls[n] = {dc[0] + d_concat[0], dc[1] + d_concat[1]};
    d_raw_reg[n] = {dr[0] + d_concat[2], dr[1] + d_concat[3]};
  }

  // raw heads
  for (int n = 0; n < n_anchor; ++n) {
    const Vec f_row = cache.anchor_feat.row_vec(n);
    const Vec d_cls_logits = softmax_backward(
        cache.cls_probs[n], {d_raw_cls[n][0], d_raw_cls[n][1]});
    add_in_place(grads.cls_head, outer(f_row, d_cls_logits));
    axpy(grads.cls_bias, 1.0, d_cls_logits);
    const Vec d_reg = {d_raw_reg[n][0], d_raw_reg[n][1]};
    add_in_place(grads.reg_head, outer(f_row, d_reg));
    axpy(grads.reg_bias, 1.0, d_reg);

    Vec df = times_col(w.cls_head, d_cls_logits);
    axpy(df, 1.0, times_col(w.reg_head, d_reg));
    for (int j = 0; j < d; ++j) d_anchor_feat.at(n, j) += df[j];
  }

  // anchor decoder layers, in reverse
  Matrix d_a = d_anchor_feat;
  Matrix d_fused(cache.fused.rows(), d);
  for (int l = static_cast<int>(w.anchor_attn.size()) - 1; l >= 0; --l) {
    const AttentionGrads g = attend_backward(
        w.anchor_attn[l], cache.anchor_attn_inputs[l], cache.fused,
        cache.anchor_attn[l], d_a, grads.anchor_attn[l]);
    add_in_place(d_a, g.d_queries);
    add_in_place(d_fused, g.d_memory);
  }
  add_in_place(grads.anchor_embed, d_a);

  // fusion blocks, in reverse
  Matrix d_x = d_fused;
  for (int b = static_cast<int>(w.fusion_mixers.size()) - 1; b >= 0; --b) {
    const Matrix up = d_x;
    mixer_seq_backward(w.fusion_mixers[b], cache.fusion_blocks[b], up,
                       grads.fusion_mixers[b], d_x);
  }

  // fusion attention layers, in reverse
  Matrix d_bundle(cache.bundle.rows(), d);
  for (int l = static_cast<int>(w.fusion_attn.size()) - 1; l >= 0; --l) {
    const AttentionGrads g = attend_backward(
        w.fusion_attn[l], cache.fusion_attn_inputs[l], cache.bundle,
        cache.fusion_attn[l], d_x, grads.fusion_attn[l]);
    add_in_place(d_x, g.d_queries);
    add_in_place(d_bundle, g.d_memory);
  }

  // window projection
  const int pad = cache.pad_rows;
  const int n_valid = cfg.window_snippets - pad;
  Matrix window_rows(n_valid, cfg.video_dim);
  for (int i = 0; i < n_valid; ++i) {
    window_rows.set_row(i, cache.window.snippets.row(pad + i));
  }
  add_in_place(grads.video_proj, matmul(transpose(window_rows), d_x));

  // bundle rows back to modality tokens and projections
  for (const StepCache::BundleSpan& span : cache.layout) {
    Vec& d_token = modality_token(grads, span.modality);
    const auto token_grad = d_bundle.row(span.begin);
    for (size_t j = 0; j < d_token.size(); ++j) d_token[j] += token_grad[j];

    const QueryPart* part = find_part(cache.query, span.modality);
    const int len = span.rows - 1;
    Matrix d_feat(len, d);
    for (int r = 0; r < len; ++r) {
      d_feat.set_row(r, d_bundle.row(span.begin + 1 + r));
    }
    add_in_place(modality_proj(grads, span.modality),
                 matmul(transpose(part->features), d_feat));
  }
}

TimeInterval anchor_interval(double t, double length_seconds, double log_len,
                             double end_offset) {
  if (!(length_seconds > 0.0)) {
    throw ValidationError("anchor_interval: anchor length must be > 0");
  }
  if (!std::isfinite(log_len) || !std::isfinite(end_offset)) {
    throw NumericError("anchor_interval: non-finite offsets");
  }
  const double e = t + length_seconds * end_offset;
  const double s = e - length_seconds * std::exp(log_len);
  return {s, e};
}

void interval_offsets(double t, double length_seconds, const TimeInterval& iv,
                      double& log_len, double& end_offset) {
  if (!(length_seconds > 0.0)) {
    throw ValidationError("interval_offsets: anchor length must be > 0");
  }
  if (!(iv.end > iv.start)) {
    throw ValidationError("interval_offsets: interval must have end > start");
  }
  end_offset = (iv.end - t) / length_seconds;
  log_len = std::log((iv.end - iv.start) / length_seconds);
}

std::vector<ScoredInterval> select_predictions(const StepPrediction& refined,
                                               double t,
                                               const AnchorConfig& anchors,
                                               double snippet_seconds,
                                               double threshold) {
  if (threshold < 0.0 || threshold > 1.0) {
    throw ValidationError("select_predictions: threshold must lie in [0,1]");
  }
  const std::vector<double> lengths = anchors.lengths_seconds(snippet_seconds);
  if (refined.anchors.size() != lengths.size()) {
    throw DimensionError("select_predictions: anchor count mismatch");
  }
  std::vector<ScoredInterval> out;
  for (size_t n = 0; n < lengths.size(); ++n) {
    const AnchorOutput& a = refined.anchors[n];
    if (!(a.fg > threshold)) continue;
    // allow at most one anchor length of lookahead past the current time
    TimeInterval iv = anchor_interval(t, lengths[n], a.log_len,
                                      std::min(a.end_offset, 1.0));
    iv.start = std::max(iv.start, 0.0);
    if (!(iv.end > iv.start)) continue;
    out.push_back({iv.start, iv.end, a.fg});
  }
  return out;
}

}  // namespace sg
