#include "sg/interval.hpp"

#include <algorithm>

#include "sg/errors.hpp"

namespace sg {

double temporal_iou(const TimeInterval& a, const TimeInterval& b) {
  if (!(a.start < a.end) || !(b.start < b.end)) {
    throw ValidationError("temporal_iou: intervals must satisfy start < end");
  }
  const double inter =
      std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = (a.end - a.start) + (b.end - b.start) - inter;
  return inter / uni;
}

}  // namespace sg
