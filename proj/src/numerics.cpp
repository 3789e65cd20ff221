#include "sg/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sg/errors.hpp"

namespace sg {

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vec softmax(const Vec& v) {
  if (v.empty()) throw DimensionError("softmax: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  Vec out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

Vec softmax_backward(const Vec& probs, const Vec& d_probs) {
  if (probs.size() != d_probs.size()) {
    throw DimensionError("softmax_backward: length mismatch " + std::to_string(probs.size()) +
                         " vs " + std::to_string(d_probs.size()));
  }
  const double inner = dot(probs, d_probs);
  Vec out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    out[i] = probs[i] * (d_probs[i] - inner);
  }
  return out;
}

namespace {

void require_ln_shapes(const Vec& x, const Vec& gamma, const Vec& beta, double eps) {
  if (x.size() != gamma.size() || x.size() != beta.size()) {
    throw DimensionError("layer_norm: lengths differ x=" + std::to_string(x.size()) +
                         " gamma=" + std::to_string(gamma.size()) +
                         " beta=" + std::to_string(beta.size()));
  }
  if (!(eps > 0.0)) throw DimensionError("layer_norm: eps must be positive");
}

}  // namespace

Vec layer_norm(const Vec& x, const Vec& gamma, const Vec& beta, double eps) {
  LayerNormCache cache;
  return layer_norm(x, gamma, beta, eps, cache);
}

Vec layer_norm(const Vec& x, const Vec& gamma, const Vec& beta, double eps,
               LayerNormCache& cache) {
  require_ln_shapes(x, gamma, beta, eps);
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  cache.inv_std = 1.0 / std::sqrt(var + eps);
  cache.xhat.resize(n);
  Vec out(n);
  for (std::size_t i = 0; i < n; ++i) {
    cache.xhat[i] = (x[i] - mean) * cache.inv_std;
    out[i] = gamma[i] * cache.xhat[i] + beta[i];
  }
  return out;
}

Vec layer_norm_backward(const Vec& d_out, const Vec& gamma, const LayerNormCache& cache,
                        Vec& d_gamma, Vec& d_beta) {
  const std::size_t n = d_out.size();
  if (cache.xhat.size() != n || gamma.size() != n) {
    throw DimensionError("layer_norm_backward: length mismatch");
  }
  Vec d_xhat(n);
  double sum_dxhat = 0.0;
  double sum_dxhat_xhat = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d_gamma[i] += d_out[i] * cache.xhat[i];
    d_beta[i] += d_out[i];
    d_xhat[i] = d_out[i] * gamma[i];
    sum_dxhat += d_xhat[i];
    sum_dxhat_xhat += d_xhat[i] * cache.xhat[i];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  Vec d_x(n);
  for (std::size_t i = 0; i < n; ++i) {
    d_x[i] = cache.inv_std *
             (d_xhat[i] - inv_n * sum_dxhat - cache.xhat[i] * inv_n * sum_dxhat_xhat);
  }
  return d_x;
}

Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& p, double h) {
  if (!(h > 0.0)) throw DimensionError("finite_diff_grad: h must be positive");
  Vec grad(p.size());
  Vec q = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    q[i] = p[i] + h;
    const double fp = f(q);
    q[i] = p[i] - h;
    const double fm = f(q);
    q[i] = p[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite objective at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

GradCheckReport compare_gradients(const Vec& analytic, const Vec& numeric, double tol) {
  if (analytic.size() != numeric.size()) {
    throw DimensionError("compare_gradients: length mismatch " +
                         std::to_string(analytic.size()) + " vs " +
                         std::to_string(numeric.size()));
  }
  GradCheckReport report;
  report.param_count = static_cast<int>(analytic.size());
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-8});
    const double rel = std::abs(analytic[i] - numeric[i]) / denom;
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

GradCheckReport check_gradient(const std::function<double(const Vec&)>& f, const Vec& p,
                               const Vec& analytic, double h, double tol) {
  return compare_gradients(analytic, finite_diff_grad(f, p, h), tol);
}

Matrix xavier_matrix(int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Vec gaussian_vec(int n, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Vec v(static_cast<std::size_t>(n));
  for (double& x : v) x = dist(rng);
  return v;
}

}  // namespace sg
