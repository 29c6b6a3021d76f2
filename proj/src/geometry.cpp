#include "ssdkit/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace ssdkit {

bool is_valid(const BBox& b) {
  return std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) &&
         std::isfinite(b.y2) && b.x1 <= b.x2 && b.y1 <= b.y2;
}

bool is_valid(const CenterBox& c) {
  return std::isfinite(c.cx) && std::isfinite(c.cy) && std::isfinite(c.w) &&
         std::isfinite(c.h) && c.w > 0 && c.h > 0;
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

CenterBox to_center(const BBox& b) {
  return {(b.x1 + b.x2) / 2, (b.y1 + b.y2) / 2, b.x2 - b.x1, b.y2 - b.y1};
}

BBox to_corner(const CenterBox& c) {
  return {c.cx - c.w / 2, c.cy - c.h / 2, c.cx + c.w / 2, c.cy + c.h / 2};
}

BBox clip_unit(const BBox& b) {
  auto c = [](double v) { return std::clamp(v, 0.0, 1.0); };
  return {c(b.x1), c(b.y1), c(b.x2), c(b.y2)};
}

}  // namespace ssdkit
