#pragma once

#include <algorithm>
#include <stdexcept>

// Character box in pixel corner coordinates plus the 1-D overlap measure used
// everywhere boxes are compared: text lines are height-normalized, so overlap
// is judged on the horizontal interval alone.

namespace linerec {

struct CharBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  int class_id = -1;
  double score = 0.0;

  double cx() const { return 0.5 * (x_min + x_max); }
  double cy() const { return 0.5 * (y_min + y_max); }
  double w() const { return x_max - x_min; }
  double h() const { return y_max - y_min; }
};

inline double interval_iou(double a_min, double a_max, double b_min, double b_max) {
  if (a_min >= a_max || b_min >= b_max) throw std::invalid_argument("interval_iou: empty interval");
  const double inter = std::max(0.0, std::min(a_max, b_max) - std::max(a_min, b_min));
  const double uni = (a_max - a_min) + (b_max - b_min) - inter;
  return inter / uni;
}

inline double interval_iou(const CharBox& a, const CharBox& b) {
  return interval_iou(a.x_min, a.x_max, b.x_min, b.x_max);
}

}  // namespace linerec
