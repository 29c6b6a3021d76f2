#pragma once

#include <array>

namespace ssdkit {

/// Axis-aligned box in normalized corner form.
struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Same rectangle in center/extent form; the native form of prior boxes.
struct CenterBox {
  double cx = 0, cy = 0, w = 0, h = 0;

  friend bool operator==(const CenterBox&, const CenterBox&) = default;
};

/// x1 <= x2, y1 <= y2, all finite.
bool is_valid(const BBox& b);
bool is_valid(const CenterBox& c);

/// Intersection over union. Two zero-area boxes give 0.
double iou(const BBox& a, const BBox& b);

CenterBox to_center(const BBox& b);
BBox to_corner(const CenterBox& c);

/// Clamp every coordinate to [0,1].
BBox clip_unit(const BBox& b);

}  // namespace ssdkit
