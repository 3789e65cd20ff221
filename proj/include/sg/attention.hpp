#pragma once

#include "sg/matrix.hpp"
#include "sg/numerics.hpp"

namespace sg {

// Single-head scaled dot-product attention, row convention: projections act
// as x^T W, all four maps are dim×dim.
struct AttentionParams {
  Matrix query_proj;
  Matrix key_proj;
  Matrix value_proj;
  Matrix out_proj;

  static AttentionParams init(int dim, Rng& rng);
  void check_shapes() const;
  int dim() const { return query_proj.rows(); }
};

struct AttentionCache {
  Matrix q{0, 0};        // n_q×D
  Matrix k{0, 0};        // n_k×D
  Matrix v{0, 0};        // n_k×D
  Matrix probs{0, 0};    // n_q×n_k
  Matrix context{0, 0};  // n_q×D
};

// Rows of `queries` attend over rows of `memory`; returns n_q×D output.
Matrix attend(const AttentionParams& p, const Matrix& queries,
              const Matrix& memory, AttentionCache* cache = nullptr);

struct AttentionGrads {
  Matrix d_queries{0, 0};
  Matrix d_memory{0, 0};
};

// Backward of attend(). Parameter gradients accumulate into d_params; input
// gradients are returned. For self-attention (queries == memory) the caller
// adds both returned pieces.
AttentionGrads attend_backward(const AttentionParams& p, const Matrix& queries,
                               const Matrix& memory, const AttentionCache& cache,
                               const Matrix& d_out, AttentionParams& d_params);

}  // namespace sg
