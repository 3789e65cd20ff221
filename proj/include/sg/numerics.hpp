#pragma once

#include <functional>
#include <random>

#include "sg/matrix.hpp"

namespace sg {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kGradCheckStep = 1e-4;
inline constexpr double kGradCheckTol = 1e-4;

double sigmoid(double x);
Vec softmax(const Vec& v);  // max-subtracted, sums to 1

// d(loss)/d(logits) given d(loss)/d(probs) for p = softmax(logits).
Vec softmax_backward(const Vec& probs, const Vec& d_probs);

struct LayerNormCache {
  Vec xhat;        // (x - mean) / sqrt(var + eps)
  double inv_std;  // 1 / sqrt(var + eps)
};

Vec layer_norm(const Vec& x, const Vec& gamma, const Vec& beta, double eps = kLayerNormEps);
Vec layer_norm(const Vec& x, const Vec& gamma, const Vec& beta, double eps, LayerNormCache& cache);

// Returns d(loss)/dx and accumulates d_gamma / d_beta.
Vec layer_norm_backward(const Vec& d_out, const Vec& gamma, const LayerNormCache& cache,
                        Vec& d_gamma, Vec& d_beta);

// Central differences (f(p+h e_i) - f(p-h e_i)) / 2h. Throws NumericError
// if f evaluates to a non-finite value.
Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& p, double h);

struct GradCheckReport {
  double max_rel_error = 0.0;
  int param_count = 0;
  bool passed = false;
};

// Compares an analytic gradient against central differences; relative error
// per coordinate uses denominator max(|analytic|, |numeric|, 1e-8).
GradCheckReport check_gradient(const std::function<double(const Vec&)>& f, const Vec& p,
                               const Vec& analytic, double h = kGradCheckStep,
                               double tol = kGradCheckTol);

// Same comparison for two precomputed gradients.
GradCheckReport compare_gradients(const Vec& analytic, const Vec& numeric,
                                  double tol = kGradCheckTol);

using Rng = std::mt19937_64;

// Xavier-uniform init over fan_in = rows, fan_out = cols.
Matrix xavier_matrix(int rows, int cols, Rng& rng);
Vec gaussian_vec(int n, double stddev, Rng& rng);

}  // namespace sg
