#include "sg/attention.hpp"

#include <cmath>

#include "sg/errors.hpp"

namespace sg {

AttentionParams AttentionParams::init(int dim, Rng& rng) {
  AttentionParams p;
  p.query_proj = xavier_matrix(dim, dim, rng);
  p.key_proj = xavier_matrix(dim, dim, rng);
  p.value_proj = xavier_matrix(dim, dim, rng);
  p.out_proj = xavier_matrix(dim, dim, rng);
  return p;
}

void AttentionParams::check_shapes() const {
  const int d = query_proj.rows();
  auto square = [d](const Matrix& m) { return m.rows() == d && m.cols() == d; };
  if (!square(query_proj) || !square(key_proj) || !square(value_proj) ||
      !square(out_proj)) {
    throw DimensionError("attention: all projections must be dim x dim");
  }
}

Matrix attend(const AttentionParams& p, const Matrix& queries,
              const Matrix& memory, AttentionCache* cache) {
  if (queries.cols() != p.query_proj.rows() ||
      memory.cols() != p.key_proj.rows()) {
    throw DimensionError("attend: input width does not match projections");
  }
  const int nq = queries.rows();
  const int nk = memory.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(queries.cols()));

  Matrix q = matmul(queries, p.query_proj);
  Matrix k = matmul(memory, p.key_proj);
  Matrix v = matmul(memory, p.value_proj);

  Matrix probs(nq, nk);
  for (int i = 0; i < nq; ++i) {
    Vec scores(nk);
    for (int j = 0; j < nk; ++j) {
      double s = 0.0;
      for (int c = 0; c < q.cols(); ++c) s += q.at(i, c) * k.at(j, c);
      scores[j] = s * scale;
    }
    const Vec pr = softmax(scores);
    probs.set_row(i, pr);
  }

  Matrix context = matmul(probs, v);
  Matrix out = matmul(context, p.out_proj);
  if (cache) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->context = std::move(context);
  }
  return out;
}

AttentionGrads attend_backward(const AttentionParams& p, const Matrix& queries,
                               const Matrix& memory, const AttentionCache& cache,
                               const Matrix& d_out, AttentionParams& d_params) {
  const int nq = queries.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(queries.cols()));

  Matrix d_context = matmul(d_out, transpose(p.out_proj));
  add_in_place(d_params.out_proj, matmul(transpose(cache.context), d_out));

  Matrix d_v = matmul(transpose(cache.probs), d_context);
  add_in_place(d_params.value_proj, matmul(transpose(memory), d_v));

  Matrix d_probs = matmul(d_context, transpose(cache.v));
  Matrix d_scores(nq, cache.probs.cols());
  for (int i = 0; i < nq; ++i) {
    const Vec ds = softmax_backward(cache.probs.row_vec(i), d_probs.row_vec(i));
    for (int j = 0; j < d_scores.cols(); ++j) d_scores.at(i, j) = ds[j] * scale;
  }

  Matrix d_q = matmul(d_scores, cache.k);
  Matrix d_k = matmul(transpose(d_scores), cache.q);
  add_in_place(d_params.query_proj, matmul(transpose(queries), d_q));
  add_in_place(d_params.key_proj, matmul(transpose(memory), d_k));

  AttentionGrads g;
  g.d_queries = matmul(d_q, transpose(p.query_proj));
  g.d_memory = matmul(d_k, transpose(p.key_proj));
  add_in_place(g.d_memory, matmul(d_v, transpose(p.value_proj)));
  return g;
}

}  // namespace sg
