#include "sg/mixer.hpp"

#include <cmath>

#include "sg/errors.hpp"
#include "sg/hash.hpp"

namespace sg {

MixerKind mixer_kind_from_string(std::string_view s) {
  if (s == "pml") return MixerKind::kParametricMemory;
  if (s == "recurrent") return MixerKind::kRecurrent;
  if (s == "attention") return MixerKind::kWindowAttention;
  throw ConfigError("unknown mixer kind: " + std::string(s) +
                    " (expected pml|recurrent|attention)");
}

std::string to_string(MixerKind kind) {
  switch (kind) {
    case MixerKind::kParametricMemory: return "pml";
    case MixerKind::kRecurrent: return "recurrent";
    case MixerKind::kWindowAttention: return "attention";
  }
  throw ConfigError("invalid MixerKind value");
}

RecurrentLayer RecurrentLayer::init(int d_in, int d_h, int d_out, Rng& rng) {
  RecurrentLayer l;
  l.input_proj = xavier_matrix(d_in, d_h, rng);
  l.gate_proj = xavier_matrix(d_in, d_h, rng);
  l.out_proj = xavier_matrix(d_h, d_out, rng);
  l.ln_gamma.assign(d_h, 1.0);
  l.ln_beta.assign(d_h, 0.0);
  return l;
}

void RecurrentState::reset() {
  hidden.assign(hidden.size(), 0.0);
  step_count = 0;
}

std::uint64_t RecurrentState::content_hash() const {
  std::uint64_t h = fnv1a64(hidden);
  return fnv1a64_bytes(&step_count, sizeof(step_count), h);
}

void recurrent_write(const RecurrentLayer& layer, RecurrentState& state,
                     const Vec& input) {
  if (state.hidden.size() != static_cast<size_t>(layer.d_h())) {
    throw DimensionError("recurrent_write: state width mismatch");
  }
  const Vec target = row_times(input, layer.input_proj);
  for (size_t i = 0; i < state.hidden.size(); ++i) {
    state.hidden[i] = (1.0 - layer.blend) * state.hidden[i] +
                      layer.blend * std::tanh(target[i]);
  }
  ++state.step_count;
  if (!all_finite(state.hidden)) {
    throw NumericError("recurrent_write: non-finite state at step " +
                       std::to_string(state.step_count));
  }
}

Vec recurrent_read(const RecurrentLayer& layer, const Vec& hidden,
                   const Vec& input, RecurrentReadCache* cache) {
  Vec gate_pre = row_times(input, layer.gate_proj);
  Vec gate(gate_pre.size());
  Vec mix(gate_pre.size());
  for (size_t i = 0; i < gate.size(); ++i) {
    gate[i] = sigmoid(gate_pre[i]);
    mix[i] = hidden[i] * gate[i];
  }
  LayerNormCache ln;
  const Vec normed = layer_norm(mix, layer.ln_gamma, layer.ln_beta, kLayerNormEps, ln);
  Vec out = row_times(normed, layer.out_proj);
  if (cache) {
    cache->gate_pre = std::move(gate_pre);
    cache->gate = std::move(gate);
    cache->mix = std::move(mix);
    cache->ln = std::move(ln);
  }
  return out;
}

void recurrent_read_backward(const RecurrentLayer& layer, const Vec& hidden,
                             const Vec& input, const RecurrentReadCache& cache,
                             const Vec& upstream, Matrix& d_gate_proj,
                             Matrix& d_out_proj, Vec& d_ln_gamma,
                             Vec& d_ln_beta, Vec& d_input) {
  Vec normed(cache.ln.xhat.size());
  for (size_t i = 0; i < normed.size(); ++i) {
    normed[i] = layer.ln_gamma[i] * cache.ln.xhat[i] + layer.ln_beta[i];
  }
  add_in_place(d_out_proj, outer(normed, upstream));
  const Vec d_normed = times_col(layer.out_proj, upstream);
  const Vec d_mix =
      layer_norm_backward(d_normed, layer.ln_gamma, cache.ln, d_ln_gamma, d_ln_beta);
  Vec d_gate_pre(d_mix.size());
  for (size_t i = 0; i < d_mix.size(); ++i) {
    const double d_gate = d_mix[i] * hidden[i];
    d_gate_pre[i] = d_gate * cache.gate[i] * (1.0 - cache.gate[i]);
  }
  add_in_place(d_gate_proj, outer(input, d_gate_pre));
  const Vec dx = times_col(layer.gate_proj, d_gate_pre);
  for (size_t i = 0; i < dx.size(); ++i) d_input[i] += dx[i];
}

MixerWeights MixerWeights::init(MixerKind kind, int dim, int hidden, Rng& rng) {
  MixerWeights w;
  w.kind = kind;
  switch (kind) {
    case MixerKind::kParametricMemory:
      w.pml = ParamMemoryLayer::init(dim, hidden, dim, rng);
      break;
    case MixerKind::kRecurrent:
      w.recurrent = RecurrentLayer::init(dim, hidden, dim, rng);
      break;
    case MixerKind::kWindowAttention:
      w.attention = AttentionParams::init(dim, rng);
      break;
  }
  return w;
}

void MixerState::reset() {
  memory.reset();
  hidden.reset();
}

std::uint64_t MixerState::content_hash() const {
  return fnv1a64(hidden.hidden, memory.content_hash());
}

MixerState make_mixer_state(const MixerWeights& w) {
  MixerState s;
  switch (w.kind) {
    case MixerKind::kParametricMemory:
      s.memory = ParamMemoryState(w.pml.d_h());
      break;
    case MixerKind::kRecurrent:
      s.hidden = RecurrentState(w.recurrent.d_h());
      break;
    case MixerKind::kWindowAttention:
      break;
  }
  return s;
}

}  // namespace sg
