#include <doctest.h>

#include <cmath>
#include <random>

#include "sg/losses.hpp"
#include "sg/numerics.hpp"

using namespace sg;

TEST_CASE("focal loss hand value for a positive at p=0.5") {
  // alpha (1-p)^gamma (-ln p) = 0.9 * 0.25 * ln 2
  LossConfig cfg;
  std::vector<AnchorTarget> t(1);
  t[0].positive = true;
  double loss = focal_loss({0.5}, t, cfg);
  CHECK(loss == doctest::Approx(0.15595811562598769).epsilon(1e-12));
}

TEST_CASE("focal loss with gamma=0 alpha=0.5 halves binary cross-entropy") {
  LossConfig cfg;
  cfg.focal_alpha = 0.5;
  cfg.focal_gamma = 0.0;
  Rng rng(77);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 1 + trial % 5;
    Vec p(n);
    std::vector<AnchorTarget> t(n);
    double bce = 0.0;
    for (int i = 0; i < n; ++i) {
      p[i] = u(rng);
      t[i].positive = coin(rng);
      bce += t[i].positive ? -std::log(p[i]) : -std::log(1.0 - p[i]);
    }
    bce /= n;
    CHECK(focal_loss(p, t, cfg) == doctest::Approx(0.5 * bce).epsilon(1e-9));
  }
}

TEST_CASE("focal gradient matches finite differences away from the clamp") {
  LossConfig cfg;
  Vec p = {0.3, 0.8, 0.5, 0.12};
  std::vector<AnchorTarget> t(4);
  t[0].positive = true;
  t[2].positive = true;
  Vec analytic(4, 0.0);
  focal_loss(p, t, cfg, &analytic);
  auto f = [&](const Vec& q) { return focal_loss(q, t, cfg); };
  Vec numeric = finite_diff_grad(f, p, 1e-7);
  CHECK(compare_gradients(analytic, numeric, 1e-6).passed);
}

TEST_CASE("focal gradient is zero where the probability clamp binds") {
  LossConfig cfg;
  std::vector<AnchorTarget> t(1);
  t[0].positive = true;
  Vec g(1, 123.0);
  double loss = focal_loss({1.0}, t, cfg, &g);
  CHECK(std::isfinite(loss));
  CHECK(g[0] == 0.0);
}

TEST_CASE("regression loss hand value and positives-only averaging") {
  std::vector<AnchorTarget> t(3);
  t[1].positive = true;
  t[1].log_len = 0.25;
  t[1].end_offset = 0.0;
  std::vector<std::array<double, 2>> pred = {
      {9.0, 9.0},          // negative anchor: ignored entirely
      {0.5, 0.5},          // |0.5-0.25| + |0.5-0| = 0.75
      {-3.0, 4.0},         // negative anchor: ignored
  };
  std::vector<std::array<double, 2>> grad;
  CHECK(regression_loss(pred, t, &grad) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(grad[0][0] == 0.0);
  CHECK(grad[2][1] == 0.0);
  CHECK(grad[1][0] == doctest::Approx(1.0));  // sign / n_pos
  CHECK(grad[1][1] == doctest::Approx(1.0));

  std::vector<AnchorTarget> none(3);
  CHECK(regression_loss(pred, none) == 0.0);
}

TEST_CASE("distillation loss vanishes when student equals teacher") {
  DistillSignals s;
  s.anchor_feat = Matrix(2, 3, {0.1, -0.4, 0.9, 1.2, 0.0, -0.3});
  s.cls = {{0.6, 0.4}, {0.2, 0.8}};
  s.reg = {{0.1, -0.2}, {0.3, 0.4}};
  LossConfig cfg;
  CHECK(distillation_loss(s, s, cfg) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("distillation class-probability term: hand value") {
  // Identical features and regressions; cls differs by (0.2, -0.2):
  // 0.5 * (0.04 + 0.04) = 0.04 over one anchor.
  DistillSignals s, t;
  s.anchor_feat = Matrix(1, 2, {0.5, -0.5});
  t.anchor_feat = s.anchor_feat;
  s.reg = {{0.0, 0.0}};
  t.reg = {{0.0, 0.0}};
  s.cls = {{0.7, 0.3}};
  t.cls = {{0.5, 0.5}};
  LossConfig cfg;
  CHECK(distillation_loss(s, t, cfg) == doctest::Approx(0.04).epsilon(1e-12));
}

TEST_CASE("distillation KL term is non-negative and zero only at equality") {
  DistillSignals s, t;
  s.anchor_feat = Matrix(1, 3, {1.0, 0.0, -1.0});
  t.anchor_feat = Matrix(1, 3, {0.0, 0.0, 0.0});
  s.cls = {{0.5, 0.5}};
  t.cls = {{0.5, 0.5}};
  s.reg = {{0.0, 0.0}};
  t.reg = {{0.0, 0.0}};
  LossConfig cfg;
  CHECK(distillation_loss(s, t, cfg) > 0.0);
}

TEST_CASE("distillation gradient matches finite differences") {
  Rng rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  DistillSignals s, t;
  s.anchor_feat = Matrix(2, 4);
  t.anchor_feat = Matrix(2, 4);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) {
      s.anchor_feat.at(r, c) = u(rng);
      t.anchor_feat.at(r, c) = u(rng);
    }
  auto rand_pair = [&]() {
    double a = 0.2 + 0.6 * std::abs(u(rng));
    return std::array<double, 2>{a, 1.0 - a};
  };
  s.cls = {rand_pair(), rand_pair()};
  t.cls = {rand_pair(), rand_pair()};
  s.reg = {{u(rng), u(rng)}, {u(rng), u(rng)}};
  t.reg = {{u(rng), u(rng)}, {u(rng), u(rng)}};
  LossConfig cfg;

  DistillGrads grads;
  distillation_loss(s, t, cfg, &grads);

  // Features.
  Vec flat(s.anchor_feat.data(), s.anchor_feat.data() + 8);
  auto f = [&](const Vec& p) {
    DistillSignals probe = s;
    std::copy(p.begin(), p.end(), probe.anchor_feat.data());
    return distillation_loss(probe, t, cfg);
  };
  Vec analytic(grads.d_anchor_feat.data(), grads.d_anchor_feat.data() + 8);
  CHECK(compare_gradients(analytic, finite_diff_grad(f, flat, 1e-6), 1e-6).passed);

  // Regression pairs.
  Vec rflat = {s.reg[0][0], s.reg[0][1], s.reg[1][0], s.reg[1][1]};
  auto fr = [&](const Vec& p) {
    DistillSignals probe = s;
    probe.reg = {{p[0], p[1]}, {p[2], p[3]}};
    return distillation_loss(probe, t, cfg);
  };
  Vec ranalytic = {grads.d_reg[0][0], grads.d_reg[0][1], grads.d_reg[1][0],
                   grads.d_reg[1][1]};
  CHECK(compare_gradients(ranalytic, finite_diff_grad(fr, rflat, 1e-6), 1e-6).passed);
}

TEST_CASE("total loss weighting") {
  LossConfig cfg;  // cls_weight 10
  CHECK(total_loss(0.1, 0.1, 0.1, cfg, true) == doctest::Approx(1.2).epsilon(1e-12));
  CHECK(total_loss(0.1, 0.1, 0.1, cfg, false) == doctest::Approx(1.1).epsilon(1e-12));
  CHECK(total_loss(0.0, 0.0, 0.0, cfg, true) == 0.0);
}

TEST_CASE("anchor target assignment follows best-IoU matching") {
  // Window ends at t=16; anchor lengths 8 and 4 seconds.
  std::vector<TimeInterval> gts = {{9.0, 15.0}, {0.0, 2.0}};
  auto targets = make_anchor_targets(16.0, {8.0, 4.0}, gts, 0.5);
  REQUIRE(targets.size() == 2);
  // Anchor [8,16] vs [9,15]: inter 6, union 8 -> 0.75 positive, matched to gt 0.
  CHECK(targets[0].positive);
  // Regression target reconstructs the matched moment.
  CHECK(targets[0].end_offset == doctest::Approx((15.0 - 16.0) / 8.0));
  CHECK(targets[0].log_len == doctest::Approx(std::log(6.0 / 8.0)));
  // Anchor [12,16] vs [9,15]: inter 3, union 7 -> 0.43 negative.
  CHECK_FALSE(targets[1].positive);
}

TEST_CASE("anchors below the IoU threshold are negative even when overlapping") {
  std::vector<TimeInterval> gts = {{0.0, 16.0}};
  auto targets = make_anchor_targets(16.0, {4.0}, gts, 0.5);
  CHECK_FALSE(targets[0].positive);  // IoU 4/16 = 0.25
}
