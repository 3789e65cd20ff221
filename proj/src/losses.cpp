#include "sg/losses.hpp"

#include <algorithm>
#include <cmath>

#include "sg/errors.hpp"

namespace sg {
namespace {

constexpr double kProbFloor = 1e-7;

// log-softmax of row/temperature, stable via max shift
Vec log_softmax_scaled(std::span<const double> row, double temperature) {
  Vec out(row.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : row) mx = std::max(mx, v / temperature);
  double lse = 0.0;
  for (size_t i = 0; i < row.size(); ++i) {
    out[i] = row[i] / temperature - mx;
    lse += std::exp(out[i]);
  }
  lse = std::log(lse);
  for (double& v : out) v -= lse;
  return out;
}

}  // namespace

std::vector<AnchorTarget> make_anchor_targets(
    double window_end, const std::vector<double>& anchor_lengths,
    const std::vector<TimeInterval>& ground_truth, double pos_iou_threshold) {
  std::vector<AnchorTarget> out(anchor_lengths.size());
  for (size_t i = 0; i < anchor_lengths.size(); ++i) {
    const double len = anchor_lengths[i];
    if (!(len > 0.0)) {
      throw ValidationError("make_anchor_targets: anchor length must be > 0");
    }
    const TimeInterval anchor{window_end - len, window_end};
    double best_iou = 0.0;
    const TimeInterval* best = nullptr;
    for (const TimeInterval& gt : ground_truth) {
      const double iou = temporal_iou(anchor, gt);
      if (iou > best_iou) {
        best_iou = iou;
        best = &gt;
      }
    }
    if (best != nullptr && best_iou > pos_iou_threshold) {
      out[i].positive = true;
      out[i].end_offset = (best->end - window_end) / len;
      out[i].log_len = std::log(best->length() / len);
    }
  }
  return out;
}

double focal_loss(const Vec& fg_prob, const std::vector<AnchorTarget>& targets,
                  const LossConfig& cfg, Vec* d_fg) {
  if (fg_prob.size() != targets.size()) {
    throw DimensionError("focal_loss: prediction/target count mismatch");
  }
  if (d_fg) d_fg->assign(fg_prob.size(), 0.0);
  if (fg_prob.empty()) return 0.0;

  const double a = cfg.focal_alpha;
  const double g = cfg.focal_gamma;
  const double n = static_cast<double>(fg_prob.size());
  double total = 0.0;
  for (size_t i = 0; i < fg_prob.size(); ++i) {
    const bool clipped =
        fg_prob[i] < kProbFloor || fg_prob[i] > 1.0 - kProbFloor;
    const double p = std::clamp(fg_prob[i], kProbFloor, 1.0 - kProbFloor);
    double term, grad;
    if (targets[i].positive) {
      const double q = 1.0 - p;
      term = -a * std::pow(q, g) * std::log(p);
      grad = a * g * std::pow(q, g - 1.0) * std::log(p) -
             a * std::pow(q, g) / p;
    } else {
      term = -(1.0 - a) * std::pow(p, g) * std::log(1.0 - p);
      grad = -(1.0 - a) * g * std::pow(p, g - 1.0) * std::log(1.0 - p) +
             (1.0 - a) * std::pow(p, g) / (1.0 - p);
    }
    total += term;
    if (d_fg && !clipped) (*d_fg)[i] = grad / n;
  }
  return total / n;
}

double regression_loss(const std::vector<std::array<double, 2>>& pred,
                       const std::vector<AnchorTarget>& targets,
                       std::vector<std::array<double, 2>>* d_pred) {
  if (pred.size() != targets.size()) {
    throw DimensionError("regression_loss: prediction/target count mismatch");
  }
  if (d_pred) d_pred->assign(pred.size(), {0.0, 0.0});
  size_t n_pos = 0;
  for (const AnchorTarget& t : targets) n_pos += t.positive ? 1 : 0;
  if (n_pos == 0) return 0.0;

  const double inv = 1.0 / static_cast<double>(n_pos);
  double total = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (!targets[i].positive) continue;
    const double dl = pred[i][0] - targets[i].log_len;
    const double doff = pred[i][1] - targets[i].end_offset;
    total += std::abs(dl) + std::abs(doff);
    if (d_pred) {
      (*d_pred)[i][0] = (dl > 0 ? 1.0 : (dl < 0 ? -1.0 : 0.0)) * inv;
      (*d_pred)[i][1] = (doff > 0 ? 1.0 : (doff < 0 ? -1.0 : 0.0)) * inv;
    }
  }
  return total * inv;
}

double distillation_loss(const DistillSignals& student,
                         const DistillSignals& teacher, const LossConfig& cfg,
                         DistillGrads* d_student) {
  const size_t n = student.anchor_feat.rows();
  if (teacher.anchor_feat.rows() != n ||
      teacher.anchor_feat.cols() != student.anchor_feat.cols() ||
      student.cls.size() != n || teacher.cls.size() != n ||
      student.reg.size() != n || teacher.reg.size() != n) {
    throw DimensionError("distillation_loss: student/teacher shape mismatch");
  }
  if (!(cfg.kl_temperature > 0.0)) {
    throw ConfigError("distillation_loss: temperature must be > 0");
  }
  if (d_student) {
    d_student->d_anchor_feat =
        Matrix(n, student.anchor_feat.cols());
    d_student->d_cls.assign(n, {0.0, 0.0});
    d_student->d_reg.assign(n, {0.0, 0.0});
  }
  if (n == 0) return 0.0;

  const double temp = cfg.kl_temperature;
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Vec lp = log_softmax_scaled(student.anchor_feat.row(i), temp);
    const Vec lq = log_softmax_scaled(teacher.anchor_feat.row(i), temp);
    double kl = 0.0;
    for (size_t j = 0; j < lp.size(); ++j) {
      kl += std::exp(lp[j]) * (lp[j] - lq[j]);
    }
    double mse_reg = 0.0, mse_cls = 0.0;
    for (int j = 0; j < 2; ++j) {
      const double dr = student.reg[i][j] - teacher.reg[i][j];
      const double dc = student.cls[i][j] - teacher.cls[i][j];
      mse_reg += dr * dr * 0.5;
      mse_cls += dc * dc * 0.5;
    }
    total += kl + mse_reg + mse_cls;

    if (d_student) {
      auto d_feat = d_student->d_anchor_feat.row(i);
      for (size_t j = 0; j < lp.size(); ++j) {
        const double pj = std::exp(lp[j]);
        d_feat[j] = inv_n / temp * pj * ((lp[j] - lq[j]) - kl);
      }
      for (int j = 0; j < 2; ++j) {
        d_student->d_reg[i][j] =
            inv_n * (student.reg[i][j] - teacher.reg[i][j]);
        d_student->d_cls[i][j] =
            inv_n * (student.cls[i][j] - teacher.cls[i][j]);
      }
    }
  }
  return total * inv_n;
}

double total_loss(double distill, double cls, double reg,
                  const LossConfig& cfg, bool with_distill) {
  return (with_distill ? distill : 0.0) + cfg.cls_weight * cls + reg;
}

}  // namespace sg
