#pragma once

#include <array>
#include <vector>

#include "sg/interval.hpp"
#include "sg/matrix.hpp"

namespace sg {

struct LossConfig {
  double focal_alpha = 0.9;
  double focal_gamma = 2.0;
  double cls_weight = 10.0;       // multiplier on the classification term
  double kl_temperature = 2.0;    // softening for distillation
  double pos_iou_threshold = 0.5; // anchor/ground-truth matching cutoff
};

// Per-anchor supervision: whether the anchor matched a ground-truth moment
// and, if so, the regression targets expressed in the anchor's own frame
// (end_offset in [0,1] fractions of anchor length, log_len = ln(len/anchor)).
struct AnchorTarget {
  bool positive = false;
  double log_len = 0.0;
  double end_offset = 0.0;
};

// Match each anchor ending at `window_end` against the ground-truth moments.
// anchor_lengths are in seconds. An anchor is positive when its best IoU
// exceeds the threshold; regression targets come from that best match.
std::vector<AnchorTarget> make_anchor_targets(
    double window_end, const std::vector<double>& anchor_lengths,
    const std::vector<TimeInterval>& ground_truth, double pos_iou_threshold);

// Class-imbalance-aware binary loss on the foreground probability of each
// anchor, averaged over anchors. If d_fg is non-null it receives
// d(loss)/d(fg_prob[i]); probabilities are clamped away from {0,1} before
// both the value and the gradient are computed.
double focal_loss(const Vec& fg_prob, const std::vector<AnchorTarget>& targets,
                  const LossConfig& cfg, Vec* d_fg = nullptr);

// Mean L1 distance between predicted and target (log_len, end_offset) pairs,
// restricted to positive anchors. Returns 0 (and zero grads) when no anchor
// is positive. d_pred, if given, gets the subgradient (sign convention: 0 at
// exact equality).
double regression_loss(const std::vector<std::array<double, 2>>& pred,
                       const std::vector<AnchorTarget>& targets,
                       std::vector<std::array<double, 2>>* d_pred = nullptr);

// Everything the distillation term consumes from one model's step output.
// anchor_feat holds one decoded feature row per anchor; cls holds the two
// class probabilities (foreground, background); reg holds (log_len,
// end_offset).
struct DistillSignals {
  Matrix anchor_feat{0, 0};
  std::vector<std::array<double, 2>> cls;
  std::vector<std::array<double, 2>> reg;
};

struct DistillGrads {
  Matrix d_anchor_feat{0, 0};
  std::vector<std::array<double, 2>> d_cls;
  std::vector<std::array<double, 2>> d_reg;
};

// Teacher→student transfer: per anchor, KL between temperature-softened
// feature rows plus mean-squared error on the regression pair and on the
// class probabilities, averaged over anchors. Gradients flow only to the
// student; the teacher is treated as constant.
double distillation_loss(const DistillSignals& student,
                         const DistillSignals& teacher, const LossConfig& cfg,
                         DistillGrads* d_student = nullptr);

// Weighted sum of the three terms for one step. The classification term is
// scaled by cls_weight; distillation enters only when enabled (expert
// training has no teacher).
double total_loss(double distill, double cls, double reg,
                  const LossConfig& cfg, bool with_distill);

}  // namespace sg
