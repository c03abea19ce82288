#pragma once

namespace scrap::segmentation {

// Axis-aligned box in pixels; (x, y) is the top-left corner.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  friend bool operator==(const Box&, const Box&) = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Intersection over union in [0, 1]. Zero-area union yields 0.
/// Throws DataError on negative width or height.
double iou(const Box& a, const Box& b);

/// Half-open containment: x ≤ px < x + w, y ≤ py < y + h.
bool contains(const Box& box, const Point& p);

}  // namespace scrap::segmentation
