#pragma once

#include <cstdint>

#include "sg/matrix.hpp"
#include "sg/numerics.hpp"

namespace sg {

// Outer (trained) weights of the parameter-as-memory layer. The inner
// memory matrix lives in ParamMemoryState; everything here stays fixed
// while a stream is processed.
struct ParamMemoryLayer {
  Matrix key_proj;    // d_in × d_h
  Matrix value_proj;  // d_in × d_h
  Matrix query_proj;  // d_in × d_h
  Matrix out_proj;    // d_h × d_out
  Vec rate_weights;   // d_in, input-adaptive write rate via sigmoid
  Vec ln_gamma;       // d_h
  Vec ln_beta;        // d_h

  int d_in() const { return key_proj.rows(); }
  int d_h() const { return key_proj.cols(); }
  int d_out() const { return out_proj.cols(); }

  static ParamMemoryLayer init(int d_in, int d_h, int d_out, Rng& rng);
  void check_shapes() const;
};

// Per-stream inner memory. Starts at zero; each write is one gradient step
// on the reconstruction objective for the current input.
struct ParamMemoryState {
  Matrix memory;  // d_h × d_h
  std::int64_t step_count = 0;

  ParamMemoryState() = default;
  explicit ParamMemoryState(int d_h) : memory(d_h, d_h) {}
  void reset();
  std::uint64_t content_hash() const;
};

// ‖ memory·k − v ‖² with k, v the key/value projections of `input`.
double reconstruction_loss(const ParamMemoryLayer& layer, const ParamMemoryState& state,
                           const Vec& input);

// Inner-loss gradient w.r.t. the memory matrix: 2 (memory·k − v) kᵀ.
Matrix reconstruction_grad(const ParamMemoryLayer& layer, const ParamMemoryState& state,
                           const Vec& input);

// One explicit-rate write: memory -= rate * reconstruction_grad. No clamp.
void apply_write(const ParamMemoryLayer& layer, ParamMemoryState& state, const Vec& input,
                 double rate);

// The write rate is sigmoid(rate_weights · input), clamped to
// 0.9 / (2‖k‖² + 1e-8) so a write can never increase the reconstruction loss.
double write_rate(const ParamMemoryLayer& layer, const Vec& input);
void memorize(const ParamMemoryLayer& layer, ParamMemoryState& state, const Vec& input);

struct MemoryReadCache {
  Vec query;   // input^T query_proj (d_h)
  Vec hidden;  // memory · query (d_h)
  LayerNormCache ln;
};

// out_proj^T · LN(memory · query_proj^T input). Pure; never touches state.
Vec read(const ParamMemoryLayer& layer, const ParamMemoryState& state, const Vec& input);
Vec read(const ParamMemoryLayer& layer, const Matrix& memory, const Vec& input,
         MemoryReadCache& cache);

// memorize followed by read (read sees the updated memory).
Vec step(const ParamMemoryLayer& layer, ParamMemoryState& state, const Vec& input);

struct MemoryReadGrads {
  Matrix d_query_proj;
  Matrix d_out_proj;
  Vec d_ln_gamma;
  Vec d_ln_beta;
  Vec d_input;
};

// Exact gradients of read() w.r.t. the read-path parameters and the input,
// with the memory matrix held constant. `memory` must be the matrix the
// cached read actually used.
MemoryReadGrads read_path_gradient(const ParamMemoryLayer& layer, const Matrix& memory,
                                   const Vec& input, const MemoryReadCache& cache,
                                   const Vec& upstream);

// Same, accumulating into caller-owned buffers (used by the model backward).
void read_path_gradient_accum(const ParamMemoryLayer& layer, const Matrix& memory,
                              const Vec& input, const MemoryReadCache& cache,
                              const Vec& upstream, Matrix& d_query_proj, Matrix& d_out_proj,
                              Vec& d_ln_gamma, Vec& d_ln_beta, Vec& d_input);

}  // namespace sg
