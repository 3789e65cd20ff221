#pragma once

namespace sg {

struct TimeInterval {
  double start = 0.0;
  double end = 0.0;
  double length() const { return end - start; }
};

// |a ∩ b| / |a ∪ b| for intervals with start < end. Throws DimensionError
// on degenerate input.
double temporal_iou(const TimeInterval& a, const TimeInterval& b);

}  // namespace sg
