#include <doctest.h>

#include <cmath>
#include <random>

#include "sg/errors.hpp"
#include "sg/hash.hpp"
#include "sg/interval.hpp"
#include "sg/matrix.hpp"
#include "sg/numerics.hpp"

using namespace sg;

TEST_CASE("sigmoid midpoint and symmetry") {
  CHECK(sigmoid(0.0) == doctest::Approx(0.5).epsilon(1e-12));
  for (double x : {-3.0, -0.7, 0.2, 4.5}) {
    CHECK(sigmoid(x) + sigmoid(-x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sigmoid(x) > 0.0);
    CHECK(sigmoid(x) < 1.0);
  }
}

TEST_CASE("softmax sums to one and preserves order") {
  Rng rng(5);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vec v(5);
    for (double& x : v) x = u(rng);
    Vec p = softmax(v);
    double sum = 0.0;
    for (double x : p) sum += x;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j)
        if (v[i] < v[j]) CHECK(p[i] < p[j]);
  }
  // Max-subtraction keeps huge logits finite.
  Vec p = softmax({1000.0, 1001.0});
  CHECK(all_finite(p));
  CHECK(p[1] > p[0]);
}

TEST_CASE("softmax backward matches finite differences") {
  Vec logits = {0.3, -1.2, 0.8};
  Vec d_probs = {1.0, -0.5, 0.25};
  Vec probs = softmax(logits);
  Vec analytic = softmax_backward(probs, d_probs);
  auto f = [&](const Vec& z) {
    Vec p = softmax(z);
    return dot(p, d_probs);
  };
  Vec numeric = finite_diff_grad(f, logits, 1e-6);
  GradCheckReport rep = compare_gradients(analytic, numeric, 1e-7);
  CHECK(rep.passed);
}

TEST_CASE("layer norm of [2,0] with unit gamma") {
  Vec out = layer_norm({2.0, 0.0}, {1.0, 1.0}, {0.0, 0.0});
  CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(out[1] == doctest::Approx(-1.0).epsilon(1e-4));
  Vec shifted = layer_norm({2.0, 0.0}, {1.0, 1.0}, {0.5, 0.5});
  CHECK(shifted[0] == doctest::Approx(1.5).epsilon(1e-4));
}

TEST_CASE("layer norm backward matches finite differences") {
  Vec x = {0.4, -1.0, 2.2, 0.1};
  Vec gamma = {1.1, 0.9, 1.0, 1.3};
  Vec beta = {0.0, 0.2, -0.1, 0.0};
  Vec upstream = {0.7, -0.3, 0.5, 1.0};

  LayerNormCache cache;
  layer_norm(x, gamma, beta, kLayerNormEps, cache);
  Vec d_gamma(4, 0.0), d_beta(4, 0.0);
  Vec d_x = layer_norm_backward(upstream, gamma, cache, d_gamma, d_beta);

  auto fx = [&](const Vec& p) { return dot(layer_norm(p, gamma, beta), upstream); };
  CHECK(compare_gradients(d_x, finite_diff_grad(fx, x, 1e-6), 1e-6).passed);
  auto fg = [&](const Vec& p) { return dot(layer_norm(x, p, beta), upstream); };
  CHECK(compare_gradients(d_gamma, finite_diff_grad(fg, gamma, 1e-6), 1e-6).passed);
  auto fb = [&](const Vec& p) { return dot(layer_norm(x, gamma, p), upstream); };
  CHECK(compare_gradients(d_beta, finite_diff_grad(fb, beta, 1e-6), 1e-6).passed);
}

TEST_CASE("matrix multiply shapes and values") {
  Matrix a(2, 3, {1, 2, 3, 4, 5, 6});
  Matrix b(3, 2, {7, 8, 9, 10, 11, 12});
  Matrix c = matmul(a, b);
  CHECK(c.rows() == 2);
  CHECK(c.cols() == 2);
  CHECK(c.at(0, 0) == 58);
  CHECK(c.at(1, 1) == 154);
  CHECK_THROWS_AS(matmul(a, a), DimensionError);

  Matrix t = transpose(a);
  CHECK(t.at(2, 1) == 6);
  CHECK(matmul(Matrix::identity(2), a) == a);
}

TEST_CASE("matrix rejects negative shapes but allows the empty matrix") {
  Matrix empty(0, 0);
  CHECK(empty.empty());
  CHECK_THROWS_AS(Matrix(-1, 3), DimensionError);
  CHECK_THROWS_AS(Matrix(2, 0), DimensionError);
}

TEST_CASE("row and column products agree with explicit loops") {
  Matrix m(2, 3, {1, -2, 0.5, 3, 1, -1});
  Vec v2 = {2.0, -1.0};
  Vec v3 = {1.0, 2.0, 3.0};
  Vec r = row_times(v2, m);  // v2^T m
  CHECK(r[0] == doctest::Approx(-1.0));
  CHECK(r[1] == doctest::Approx(-5.0));
  CHECK(r[2] == doctest::Approx(2.0));
  Vec c = times_col(m, v3);  // m v3
  CHECK(c[0] == doctest::Approx(-1.5));
  CHECK(c[1] == doctest::Approx(2.0));
  Matrix o = outer(v2, v3);
  CHECK(o.rows() == 2);
  CHECK(o.cols() == 3);
  CHECK(o.at(1, 2) == doctest::Approx(-3.0));
}

TEST_CASE("temporal IoU hand values") {
  CHECK(temporal_iou({0, 4}, {2, 6}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(temporal_iou({0, 4}, {0, 4}) == doctest::Approx(1.0));
  CHECK(temporal_iou({0, 1}, {2, 3}) == doctest::Approx(0.0));
  CHECK(temporal_iou({0, 10}, {2, 4}) == doctest::Approx(0.2));
  CHECK_THROWS_AS(temporal_iou({3, 3}, {0, 1}), ValidationError);
}

TEST_CASE("fnv1a64 known vectors and chaining") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  // Chaining over a split string equals hashing the concatenation.
  std::uint64_t h1 = fnv1a64("hello ");
  CHECK(fnv1a64("world", h1) == fnv1a64("hello world"));
}

TEST_CASE("derive_seed is deterministic and salt-sensitive") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
}

TEST_CASE("finite differences reject non-finite evaluations") {
  auto f = [](const Vec& p) { return std::log(p[0]); };
  CHECK_THROWS_AS(finite_diff_grad(f, {0.0}, 1e-3), NumericError);
}
