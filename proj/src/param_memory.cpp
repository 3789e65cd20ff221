#include "sg/param_memory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sg/errors.hpp"
#include "sg/hash.hpp"

namespace sg {

ParamMemoryLayer ParamMemoryLayer::init(int d_in, int d_h, int d_out, Rng& rng) {
  ParamMemoryLayer layer;
  layer.key_proj = xavier_matrix(d_in, d_h, rng);
  layer.value_proj = xavier_matrix(d_in, d_h, rng);
  layer.query_proj = xavier_matrix(d_in, d_h, rng);
  layer.out_proj = xavier_matrix(d_h, d_out, rng);
  layer.rate_weights = gaussian_vec(d_in, 1.0 / std::sqrt(static_cast<double>(d_in)), rng);
  layer.ln_gamma.assign(static_cast<std::size_t>(d_h), 1.0);
  layer.ln_beta.assign(static_cast<std::size_t>(d_h), 0.0);
  return layer;
}

void ParamMemoryLayer::check_shapes() const {
  const int din = d_in();
  const int dh = d_h();
  auto bad = [&](const char* what) {
    throw DimensionError(std::string("ParamMemoryLayer: inconsistent shape for ") + what);
  };
  if (value_proj.rows() != din || value_proj.cols() != dh) bad("value_proj");
  if (query_proj.rows() != din || query_proj.cols() != dh) bad("query_proj");
  if (out_proj.rows() != dh) bad("out_proj");
  if (static_cast<int>(rate_weights.size()) != din) bad("rate_weights");
  if (static_cast<int>(ln_gamma.size()) != dh || static_cast<int>(ln_beta.size()) != dh) {
    bad("layer norm");
  }
}

void ParamMemoryState::reset() {
  memory.fill(0.0);
  step_count = 0;
}

std::uint64_t ParamMemoryState::content_hash() const {
  std::uint64_t h = fnv1a64_bytes(memory.data(), memory.size() * sizeof(double));
  return fnv1a64_bytes(&step_count, sizeof(step_count), h);
}

double reconstruction_loss(const ParamMemoryLayer& layer, const ParamMemoryState& state,
                           const Vec& input) {
  const Vec k = row_times(input, layer.key_proj);
  const Vec v = row_times(input, layer.value_proj);
  const Vec pred = times_col(state.memory, k);
  return norm_sq(pred - v);
}

Matrix reconstruction_grad(const ParamMemoryLayer& layer, const ParamMemoryState& state,
                           const Vec& input) {
  const Vec k = row_times(input, layer.key_proj);
  const Vec v = row_times(input, layer.value_proj);
  const Vec residual = times_col(state.memory, k) - v;
  return 2.0 * outer(residual, k);
}

void apply_write(const ParamMemoryLayer& layer, ParamMemoryState& state, const Vec& input,
                 double rate) {
  const Matrix grad = reconstruction_grad(layer, state, input);
  add_scaled(state.memory, grad, -rate);
  state.step_count += 1;
  if (!state.memory.all_finite()) {
    throw NumericError("param memory write produced non-finite memory at step " +
                       std::to_string(state.step_count));
  }
}

double write_rate(const ParamMemoryLayer& layer, const Vec& input) {
  const double raw = sigmoid(dot(layer.rate_weights, input));
  const Vec k = row_times(input, layer.key_proj);
  const double bound = 0.9 / (2.0 * norm_sq(k) + 1e-8);
  return std::min(raw, bound);
}

void memorize(const ParamMemoryLayer& layer, ParamMemoryState& state, const Vec& input) {
  apply_write(layer, state, input, write_rate(layer, input));
}

Vec read(const ParamMemoryLayer& layer, const Matrix& memory, const Vec& input,
         MemoryReadCache& cache) {
  cache.query = row_times(input, layer.query_proj);
  cache.hidden = times_col(memory, cache.query);
  const Vec normed = layer_norm(cache.hidden, layer.ln_gamma, layer.ln_beta, kLayerNormEps,
                                cache.ln);
  return row_times(normed, layer.out_proj);
}

Vec read(const ParamMemoryLayer& layer, const ParamMemoryState& state, const Vec& input) {
  MemoryReadCache cache;
  return read(layer, state.memory, input, cache);
}

Vec step(const ParamMemoryLayer& layer, ParamMemoryState& state, const Vec& input) {
  memorize(layer, state, input);
  return read(layer, state, input);
}

void read_path_gradient_accum(const ParamMemoryLayer& layer, const Matrix& memory,
                              const Vec& input, const MemoryReadCache& cache,
                              const Vec& upstream, Matrix& d_query_proj, Matrix& d_out_proj,
                              Vec& d_ln_gamma, Vec& d_ln_beta, Vec& d_input) {
  if (upstream.size() != static_cast<std::size_t>(layer.d_out())) {
    throw DimensionError("read_path_gradient: upstream length " +
                         std::to_string(upstream.size()) + " vs d_out " +
                         std::to_string(layer.d_out()));
  }
  // out = normed^T out_proj
  Vec normed(cache.ln.xhat.size());
  for (std::size_t i = 0; i < normed.size(); ++i) {
    normed[i] = layer.ln_gamma[i] * cache.ln.xhat[i] + layer.ln_beta[i];
  }
  for (int i = 0; i < layer.d_h(); ++i) {
    for (int j = 0; j < layer.d_out(); ++j) {
      d_out_proj.at(i, j) += normed[i] * upstream[j];
    }
  }
  const Vec d_normed = times_col(layer.out_proj, upstream);
  const Vec d_hidden = layer_norm_backward(d_normed, layer.ln_gamma, cache.ln, d_ln_gamma,
                                           d_ln_beta);
  // hidden = memory · query
  Vec d_query(cache.query.size(), 0.0);
  for (int a = 0; a < memory.rows(); ++a) {
    for (int b = 0; b < memory.cols(); ++b) {
      d_query[b] += memory.at(a, b) * d_hidden[a];
    }
  }
  // query = input^T query_proj
  for (int i = 0; i < layer.d_in(); ++i) {
    for (int j = 0; j < layer.d_h(); ++j) {
      d_query_proj.at(i, j) += input[i] * d_query[j];
    }
  }
  const Vec d_in_contrib = times_col(layer.query_proj, d_query);
  for (std::size_t i = 0; i < d_input.size(); ++i) d_input[i] += d_in_contrib[i];
}

MemoryReadGrads read_path_gradient(const ParamMemoryLayer& layer, const Matrix& memory,
                                   const Vec& input, const MemoryReadCache& cache,
                                   const Vec& upstream) {
  MemoryReadGrads grads;
  grads.d_query_proj = Matrix(layer.d_in(), layer.d_h());
  grads.d_out_proj = Matrix(layer.d_h(), layer.d_out());
  grads.d_ln_gamma.assign(static_cast<std::size_t>(layer.d_h()), 0.0);
  grads.d_ln_beta.assign(static_cast<std::size_t>(layer.d_h()), 0.0);
  grads.d_input.assign(input.size(), 0.0);
  read_path_gradient_accum(layer, memory, input, cache, upstream, grads.d_query_proj,
                           grads.d_out_proj, grads.d_ln_gamma, grads.d_ln_beta,
                           grads.d_input);
  return grads;
}

}  // namespace sg
