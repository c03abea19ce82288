#include "scrap/segmentation/geometry.hpp"

#include <algorithm>

#include "scrap/common/error.hpp"

namespace scrap::segmentation {

double iou(const Box& a, const Box& b) {
  if (a.w < 0.0 || a.h < 0.0 || b.w < 0.0 || b.h < 0.0) {
    throw DataError("iou: box with negative width or height");
  }
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  // areas from edge differences, so iou(a, a) is exactly 1
  const double area_a = (a.x + a.w - a.x) * (a.y + a.h - a.y);
  const double area_b = (b.x + b.w - b.x) * (b.y + b.h - b.y);
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

bool contains(const Box& box, const Point& p) {
  return p.x >= box.x && p.x < box.x + box.w && p.y >= box.y && p.y < box.y + box.h;
}

}  // namespace scrap::segmentation
