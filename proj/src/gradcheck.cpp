#include "sg/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <string_view>

#include "sg/errors.hpp"
#include "sg/losses.hpp"
#include "sg/model.hpp"
#include "sg/param_memory.hpp"
#include "sg/streaming.hpp"
#include "sg/trainer.hpp"

namespace sg {
namespace {

constexpr double kStep = 1e-4;
constexpr double kModelTol = 1e-4;
constexpr double kInnerTol = 1e-6;
constexpr double kRelFloor = 1e-6;

double rel_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), kRelFloor});
  return std::abs(analytic - numeric) / denom;
}

struct Scenario {
  ModelConfig cfg;
  LossConfig loss;
  QueryBundle query;
  Matrix snippets{0, 0};
  std::vector<TimeInterval> moments;
  std::vector<DistillSignals> teacher;  // fixed targets, one per step
};

Matrix gaussian_matrix(int rows, int cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const Vec v = gaussian_vec(cols, stddev, rng);
    m.set_row(r, v);
  }
  return m;
}

Scenario make_scenario(Rng& rng) {
  Scenario s;
  s.cfg.feature_dim = 8;
  s.cfg.video_dim = 6;
  s.cfg.text_dim = 5;
  s.cfg.image_dim = 4;
  s.cfg.segment_dim = 6;
  s.cfg.window_snippets = 8;
  s.cfg.snippet_seconds = 2.0;
  s.cfg.fusion_attn_layers = 2;
  s.cfg.fusion_blocks = 2;
  s.cfg.anchor_attn_layers = 2;
  s.cfg.anchors.count = 4;
  s.cfg.anchors.longest_snippets = 8.0;  // anchor lengths 16/8/4/2 seconds
  s.cfg.validate();

  auto add_part = [&](Modality m, int rows, int dim) {
    QueryPart p;
    p.modality = m;
    p.features = gaussian_matrix(rows, dim, 1.0, rng);
    s.query.parts.push_back(std::move(p));
  };
  add_part(Modality::kText, 1, s.cfg.text_dim);
  add_part(Modality::kImage, 2, s.cfg.image_dim);
  add_part(Modality::kSegment, 2, s.cfg.segment_dim);

  const int steps = 4;
  s.snippets = gaussian_matrix(steps, s.cfg.video_dim, 1.0, rng);
  s.moments = {{2.0, 8.0}};  // positive anchors appear at the last step

  std::uniform_real_distribution<double> cls_dist(0.15, 0.85);
  for (int i = 0; i < steps; ++i) {
    DistillSignals t;
    t.anchor_feat = gaussian_matrix(s.cfg.anchors.count, s.cfg.feature_dim, 1.0, rng);
    t.cls.resize(s.cfg.anchors.count);
    t.reg.resize(s.cfg.anchors.count);
    for (int a = 0; a < s.cfg.anchors.count; ++a) {
      const double fg = cls_dist(rng);
      t.cls[a] = {fg, 1.0 - fg};
      const Vec r = gaussian_vec(2, 0.5, rng);
      t.reg[a] = {r[0], r[1]};
    }
    s.teacher.push_back(std::move(t));
  }
  return s;
}

// Same weighting as one training step: raw and refined heads share the
// supervision, distillation reads the raw head, everything averaged over
// stream steps.
double step_loss(const StepOutput& so, const std::vector<AnchorTarget>& targets,
                 const DistillSignals& teacher, const LossConfig& lc,
                 double inv_steps, StepGrad* up) {
  const int n = static_cast<int>(targets.size());
  Vec raw_fg(n), ref_fg(n);
  std::vector<std::array<double, 2>> raw_reg(n), ref_reg(n);
  for (int a = 0; a < n; ++a) {
    raw_fg[a] = so.raw.anchors[a].fg;
    ref_fg[a] = so.refined.anchors[a].fg;
    raw_reg[a] = {so.raw.anchors[a].log_len, so.raw.anchors[a].end_offset};
    ref_reg[a] = {so.refined.anchors[a].log_len, so.refined.anchors[a].end_offset};
  }
  Vec d_raw_fg, d_ref_fg;
  std::vector<std::array<double, 2>> d_raw_reg, d_ref_reg;
  const bool want = up != nullptr;
  const double cls = 0.5 * (focal_loss(raw_fg, targets, lc, want ? &d_raw_fg : nullptr) +
                            focal_loss(ref_fg, targets, lc, want ? &d_ref_fg : nullptr));
  const double reg =
      0.5 * (regression_loss(raw_reg, targets, want ? &d_raw_reg : nullptr) +
             regression_loss(ref_reg, targets, want ? &d_ref_reg : nullptr));

  DistillSignals student;
  student.anchor_feat = so.anchor_feat;
  student.cls.resize(n);
  student.reg = raw_reg;
  for (int a = 0; a < n; ++a) {
    student.cls[a] = {so.raw.anchors[a].fg, so.raw.anchors[a].bg};
  }
  DistillGrads dg;
  const double distill =
      distillation_loss(student, teacher, lc, want ? &dg : nullptr);

  if (up != nullptr) {
    up->d_raw_cls.assign(n, {0.0, 0.0});
    up->d_raw_reg.assign(n, {0.0, 0.0});
    up->d_ref_cls.assign(n, {0.0, 0.0});
    up->d_ref_reg.assign(n, {0.0, 0.0});
    const double wc = lc.cls_weight * 0.5 * inv_steps;
    const double wr = 0.5 * inv_steps;
    for (int a = 0; a < n; ++a) {
      up->d_raw_cls[a][0] = wc * d_raw_fg[a] + inv_steps * dg.d_cls[a][0];
      up->d_raw_cls[a][1] = inv_steps * dg.d_cls[a][1];
      up->d_ref_cls[a][0] = wc * d_ref_fg[a];
      up->d_raw_reg[a] = {wr * d_raw_reg[a][0] + inv_steps * dg.d_reg[a][0],
                          wr * d_raw_reg[a][1] + inv_steps * dg.d_reg[a][1]};
      up->d_ref_reg[a] = {wr * d_ref_reg[a][0], wr * d_ref_reg[a][1]};
    }
    up->d_anchor_feat = dg.d_anchor_feat;
    for (int r = 0; r < up->d_anchor_feat.rows(); ++r) {
      for (int c = 0; c < up->d_anchor_feat.cols(); ++c) {
        up->d_anchor_feat.at(r, c) *= inv_steps;
      }
    }
  }
  return total_loss(distill, cls, reg, lc, true) * inv_steps;
}

std::string group_of(std::string_view name) {
  auto starts = [&](std::string_view p) { return name.substr(0, p.size()) == p; };
  if (starts("fusion_mixer")) return "memory read path";
  if (starts("fusion_attn")) return "fusion attention";
  if (starts("anchor_attn") || name == "anchor_embed") return "anchor decoder";
  if (starts("refine_")) return "refinement head";
  if (name == "cls_head" || name == "cls_bias" || name == "reg_head" ||
      name == "reg_bias") {
    return "prediction heads";
  }
  return "input projections";
}

// Full-model check: analytic backward vs central differences of the summed
// stream loss, with every memory read pinned to the live pass's snapshots.
void check_model(const Scenario& sc, Rng& rng,
                 std::map<std::string, GradGroupResult>& groups) {
  Rng wrng(rng());
  ModelWeights weights = ModelWeights::init(sc.cfg, wrng);
  ModelState state = make_state(sc.cfg, weights);
  const std::vector<double> lengths =
      sc.cfg.anchors.lengths_seconds(sc.cfg.snippet_seconds);
  const int steps = sc.snippets.rows();
  const double inv_steps = 1.0 / steps;

  std::vector<StepCache> caches(steps);
  std::vector<std::vector<AnchorTarget>> targets(steps);
  ModelWeights grads = ModelWeights::zeros_like(weights);
  for (int i = 0; i < steps; ++i) {
    const WindowFeatures window = make_window(sc.snippets, i, sc.cfg);
    const StepOutput out =
        forward_step(weights, sc.cfg, sc.query, window, state, &caches[i]);
    targets[i] = make_anchor_targets(window.window_end, lengths, sc.moments,
                                     sc.loss.pos_iou_threshold);
    StepGrad up;
    step_loss(out, targets[i], sc.teacher[i], sc.loss, inv_steps, &up);
    backward_step(weights, sc.cfg, caches[i], up, grads);
  }

  const auto replay_loss = [&]() {
    double total = 0.0;
    for (int i = 0; i < steps; ++i) {
      const StepOutput out = replay_step(weights, sc.cfg, caches[i]);
      total += step_loss(out, targets[i], sc.teacher[i], sc.loss, inv_steps,
                         nullptr);
    }
    return total;
  };

  const auto wrefs = param_refs(weights);
  const auto grefs = param_refs(grads);
  for (std::size_t p = 0; p < wrefs.size(); ++p) {
    const std::string group = group_of(wrefs[p].name);
    GradGroupResult& g = groups[group];
    g.group = group;
    g.tolerance = std::max(g.tolerance, kModelTol);
    for (std::size_t i = 0; i < wrefs[p].size; ++i) {
      double& w = wrefs[p].data[i];
      const double saved = w;
      w = saved + kStep;
      const double f_plus = replay_loss();
      w = saved - kStep;
      const double f_minus = replay_loss();
      w = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * kStep);
      g.max_rel_error =
          std::max(g.max_rel_error, rel_error(grefs[p].data[i], numeric));
      ++g.checked;
    }
  }
}

GradGroupResult check_focal(Rng& rng) {
  GradGroupResult g{"focal loss", 0.0, kModelTol, 0, false};
  LossConfig lc;
  std::uniform_real_distribution<double> pd(0.1, 0.9);
  Vec p(6);
  for (double& v : p) v = pd(rng);
  std::vector<AnchorTarget> targets(6);
  for (std::size_t i = 0; i < targets.size(); ++i) targets[i].positive = i % 2 == 0;
  Vec analytic;
  focal_loss(p, targets, lc, &analytic);
  const auto report = check_gradient(
      [&](const Vec& x) { return focal_loss(x, targets, lc); }, p, analytic,
      kStep, kModelTol);
  g.max_rel_error = report.max_rel_error;
  g.checked = static_cast<int>(p.size());
  return g;
}

GradGroupResult check_regression(Rng& rng) {
  GradGroupResult g{"regression loss", 0.0, kModelTol, 0, false};
  std::vector<AnchorTarget> targets(4);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    targets[i].positive = i < 3;
    targets[i].log_len = 0.1 * static_cast<double>(i);
    targets[i].end_offset = -0.2 + 0.15 * static_cast<double>(i);
  }
  // keep predictions away from the L1 kink so the difference quotient is exact
  std::uniform_real_distribution<double> off(0.2, 0.6);
  std::vector<std::array<double, 2>> pred(4);
  Vec flat;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred[i] = {targets[i].log_len + off(rng), targets[i].end_offset - off(rng)};
    flat.push_back(pred[i][0]);
    flat.push_back(pred[i][1]);
  }
  std::vector<std::array<double, 2>> d_pred;
  regression_loss(pred, targets, &d_pred);
  Vec analytic;
  for (const auto& d : d_pred) {
    analytic.push_back(d[0]);
    analytic.push_back(d[1]);
  }
  const auto unflatten = [&](const Vec& x) {
    std::vector<std::array<double, 2>> out(x.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {x[2 * i], x[2 * i + 1]};
    return out;
  };
  const auto report = check_gradient(
      [&](const Vec& x) { return regression_loss(unflatten(x), targets); },
      flat, analytic, kStep, kModelTol);
  g.max_rel_error = report.max_rel_error;
  g.checked = static_cast<int>(flat.size());
  return g;
}

GradGroupResult check_distillation(Rng& rng) {
  GradGroupResult g{"distillation loss", 0.0, kModelTol, 0, false};
  LossConfig lc;
  const int n = 3, d = 5;
  DistillSignals teacher, student;
  teacher.anchor_feat = gaussian_matrix(n, d, 1.0, rng);
  student.anchor_feat = gaussian_matrix(n, d, 1.0, rng);
  std::uniform_real_distribution<double> pd(0.1, 0.9);
  for (int i = 0; i < n; ++i) {
    const double ft = pd(rng), fs = pd(rng);
    teacher.cls.push_back({ft, 1.0 - ft});
    student.cls.push_back({fs, 1.0 - fs});
    const Vec rt = gaussian_vec(2, 0.5, rng), rs = gaussian_vec(2, 0.5, rng);
    teacher.reg.push_back({rt[0], rt[1]});
    student.reg.push_back({rs[0], rs[1]});
  }
  DistillGrads dg;
  distillation_loss(student, teacher, lc, &dg);

  Vec flat, analytic;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      flat.push_back(student.anchor_feat.at(i, j));
      analytic.push_back(dg.d_anchor_feat.at(i, j));
    }
    for (int j = 0; j < 2; ++j) {
      flat.push_back(student.cls[i][j]);
      analytic.push_back(dg.d_cls[i][j]);
      flat.push_back(student.reg[i][j]);
      analytic.push_back(dg.d_reg[i][j]);
    }
  }
  const auto rebuild = [&](const Vec& x) {
    DistillSignals s = student;
    std::size_t at = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) s.anchor_feat.at(i, j) = x[at++];
      for (int j = 0; j < 2; ++j) {
        s.cls[i][j] = x[at++];
        s.reg[i][j] = x[at++];
      }
    }
    return distillation_loss(s, teacher, lc);
  };
  const auto report = check_gradient(rebuild, flat, analytic, kStep, kModelTol);
  g.max_rel_error = report.max_rel_error;
  g.checked = static_cast<int>(flat.size());
  return g;
}

GradGroupResult check_inner_memory(Rng& rng) {
  GradGroupResult g{"inner memory gradient", 0.0, kInnerTol, 0, false};
  const int d_in = 6, d_h = 5;
  Rng lrng(rng());
  const ParamMemoryLayer layer = ParamMemoryLayer::init(d_in, d_h, d_h, lrng);
  ParamMemoryState state(d_h);
  // land on a non-trivial memory by performing a few honest writes
  for (int i = 0; i < 3; ++i) memorize(layer, state, gaussian_vec(d_in, 1.0, lrng));
  const Vec input = gaussian_vec(d_in, 1.0, lrng);
  const Matrix analytic = reconstruction_grad(layer, state, input);

  const double h = 1e-6;  // tight tolerance needs a tighter step
  Matrix& mem = state.memory;
  for (int r = 0; r < mem.rows(); ++r) {
    for (int c = 0; c < mem.cols(); ++c) {
      const double saved = mem.at(r, c);
      mem.at(r, c) = saved + h;
      const double f_plus = reconstruction_loss(layer, state, input);
      mem.at(r, c) = saved - h;
      const double f_minus = reconstruction_loss(layer, state, input);
      mem.at(r, c) = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      g.max_rel_error =
          std::max(g.max_rel_error, rel_error(analytic.at(r, c), numeric));
      ++g.checked;
    }
  }
  return g;
}

GradGroupResult check_optimizer(Rng& rng) {
  GradGroupResult g{"optimizer", 0.0, kModelTol, 0, false};
  ModelConfig cfg;
  cfg.feature_dim = 4;
  cfg.video_dim = 4;
  cfg.text_dim = 4;
  cfg.image_dim = 4;
  cfg.segment_dim = 4;
  cfg.window_snippets = 4;
  cfg.fusion_attn_layers = 1;
  cfg.fusion_blocks = 1;
  cfg.anchor_attn_layers = 1;
  cfg.anchors.count = 2;
  cfg.anchors.longest_snippets = 2.0;
  Rng wrng(rng());

  {  // zero gradient, zero decay: exact fixed point
    ModelWeights w = ModelWeights::init(cfg, wrng);
    const ModelWeights before = w;
    ModelWeights zero = ModelWeights::zeros_like(w);
    TrainConfig tc;
    tc.weight_decay = 0.0;
    AdamState adam = make_adam_state(w);
    optimizer_step(w, zero, tc, adam);
    auto wr = param_refs(w);
    auto br = param_refs(const_cast<ModelWeights&>(before));
    for (std::size_t p = 0; p < wr.size(); ++p) {
      for (std::size_t i = 0; i < wr[p].size; ++i) {
        g.max_rel_error =
            std::max(g.max_rel_error, std::abs(wr[p].data[i] - br[p].data[i]));
        ++g.checked;
      }
    }
  }
  {  // unit gradient, first step: w decreases by lr/(1+eps) everywhere
    ModelWeights w = ModelWeights::init(cfg, wrng);
    const ModelWeights before = w;
    ModelWeights ones = ModelWeights::zeros_like(w);
    for (const ParamRef& r : param_refs(ones)) {
      for (std::size_t i = 0; i < r.size; ++i) r.data[i] = 1.0;
    }
    TrainConfig tc;
    tc.learning_rate = 0.1;
    tc.weight_decay = 0.0;
    AdamState adam = make_adam_state(w);
    optimizer_step(w, ones, tc, adam);
    const double expected = -tc.learning_rate / (1.0 + tc.epsilon);
    auto wr = param_refs(w);
    auto br = param_refs(const_cast<ModelWeights&>(before));
    for (std::size_t p = 0; p < wr.size(); ++p) {
      for (std::size_t i = 0; i < wr[p].size; ++i) {
        const double delta = wr[p].data[i] - br[p].data[i];
        g.max_rel_error = std::max(g.max_rel_error, rel_error(delta, expected));
        ++g.checked;
      }
    }
  }
  {  // fresh moments, zero gradient: pure decoupled decay w ← w(1 − lr·wd)
    ModelWeights w = ModelWeights::init(cfg, wrng);
    const ModelWeights before = w;
    ModelWeights zero = ModelWeights::zeros_like(w);
    TrainConfig tc;
    tc.learning_rate = 0.1;
    tc.weight_decay = 0.5;
    AdamState adam = make_adam_state(w);
    optimizer_step(w, zero, tc, adam);
    const double shrink = 1.0 - tc.learning_rate * tc.weight_decay;
    auto wr = param_refs(w);
    auto br = param_refs(const_cast<ModelWeights&>(before));
    for (std::size_t p = 0; p < wr.size(); ++p) {
      for (std::size_t i = 0; i < wr[p].size; ++i) {
        g.max_rel_error = std::max(
            g.max_rel_error,
            rel_error(wr[p].data[i], br[p].data[i] * shrink));
        ++g.checked;
      }
    }
  }
  return g;
}

}  // namespace

GradSuiteResult run_gradcheck(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(seed);
  const Scenario sc = make_scenario(rng);

  std::map<std::string, GradGroupResult> model_groups;
  check_model(sc, rng, model_groups);

  GradSuiteResult result;
  for (auto& [name, group] : model_groups) result.groups.push_back(group);
  result.groups.push_back(check_focal(rng));
  result.groups.push_back(check_regression(rng));
  result.groups.push_back(check_distillation(rng));
  result.groups.push_back(check_inner_memory(rng));
  result.groups.push_back(check_optimizer(rng));

  result.passed = true;
  for (GradGroupResult& g : result.groups) {
    g.passed = g.max_rel_error <= g.tolerance;
    result.passed = result.passed && g.passed;
  }
  result.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  return result;
}

std::string format_gradcheck(const GradSuiteResult& r) {
  std::string out;
  char line[160];
  for (const GradGroupResult& g : r.groups) {
    std::snprintf(line, sizeof(line), "%-24s %6d coords  max rel err %.3e  (tol %.0e)  %s\n",
                  g.group.c_str(), g.checked, g.max_rel_error, g.tolerance,
                  g.passed ? "ok" : "FAIL");
    out += line;
  }
  std::snprintf(line, sizeof(line), "gradcheck %s in %.1f s\n",
                r.passed ? "passed" : "FAILED", r.seconds);
  out += line;
  return out;
}

}  // namespace sg
