#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "sg/attention.hpp"
#include "sg/matrix.hpp"
#include "sg/numerics.hpp"
#include "sg/param_memory.hpp"

namespace sg {

// The sequence-mixing sublayer used inside residual blocks. The default is
// the parameter-as-memory layer; the other two exist so the memory mechanism
// can be swapped out and compared under identical training.
enum class MixerKind {
  kParametricMemory,  // inner weight matrix updated by reconstruction steps
  kRecurrent,         // fixed-size gated hidden state
  kWindowAttention,   // stateless self-attention over the current rows
};

MixerKind mixer_kind_from_string(std::string_view s);
std::string to_string(MixerKind kind);

// Gated recurrent cell with a stop-gradient hidden state: writes blend the
// state toward tanh(x^T input_proj); reads gate the state by the current
// input and project back out. Outer gradients flow only through the read
// path, mirroring the parametric-memory training rule.
struct RecurrentLayer {
  Matrix input_proj;  // d_in × d_h, write path (receives no outer gradient)
  Matrix gate_proj;   // d_in × d_h
  Matrix out_proj;    // d_h × d_out
  Vec ln_gamma;       // d_h
  Vec ln_beta;        // d_h
  double blend = 0.5;  // fixed write rate

  int d_in() const { return gate_proj.rows(); }
  int d_h() const { return gate_proj.cols(); }
  int d_out() const { return out_proj.cols(); }
  static RecurrentLayer init(int d_in, int d_h, int d_out, Rng& rng);
};

struct RecurrentState {
  Vec hidden;
  std::int64_t step_count = 0;

  RecurrentState() = default;
  explicit RecurrentState(int d_h) : hidden(d_h, 0.0) {}
  void reset();
  std::uint64_t content_hash() const;
};

void recurrent_write(const RecurrentLayer& layer, RecurrentState& state,
                     const Vec& input);

struct RecurrentReadCache {
  Vec gate_pre;  // x^T gate_proj
  Vec gate;      // sigmoid(gate_pre)
  Vec mix;       // hidden ⊙ gate
  LayerNormCache ln;
};

// out_proj^T LN(hidden ⊙ sigmoid(x^T gate_proj)); pure.
Vec recurrent_read(const RecurrentLayer& layer, const Vec& hidden,
                   const Vec& input, RecurrentReadCache* cache = nullptr);

// Read-path gradients with the hidden state held constant.
void recurrent_read_backward(const RecurrentLayer& layer, const Vec& hidden,
                             const Vec& input, const RecurrentReadCache& cache,
                             const Vec& upstream, Matrix& d_gate_proj,
                             Matrix& d_out_proj, Vec& d_ln_gamma,
                             Vec& d_ln_beta, Vec& d_input);

// One sequence-mixing sublayer; exactly one of the members is active,
// selected by `kind`.
struct MixerWeights {
  MixerKind kind = MixerKind::kParametricMemory;
  ParamMemoryLayer pml;
  RecurrentLayer recurrent;
  AttentionParams attention;

  static MixerWeights init(MixerKind kind, int dim, int hidden, Rng& rng);
};

// Per-stream state for one mixer site; unused members stay empty.
struct MixerState {
  ParamMemoryState memory;
  RecurrentState hidden;

  void reset();
  std::uint64_t content_hash() const;
};

MixerState make_mixer_state(const MixerWeights& w);

}  // namespace sg
