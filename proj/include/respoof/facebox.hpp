#pragma once

#include <algorithm>

#include "respoof/errors.hpp"

namespace respoof {

/// Axis-aligned face rectangle, top-left anchored, in pixels.
struct FaceBox {
  int x = 0, y = 0, w = 0, h = 0;

  bool operator==(const FaceBox&) const = default;

  bool inside(int img_w, int img_h) const {
    return w > 0 && h > 0 && x >= 0 && y >= 0 && x + w <= img_w && y + h <= img_h;
  }

  void validate(int img_w, int img_h) const {
    if (!inside(img_w, img_h)) throw RejectedInput("FaceBox outside image");
  }

  double iou(const FaceBox& o) const {
    const int ix0 = std::max(x, o.x), iy0 = std::max(y, o.y);
    const int ix1 = std::min(x + w, o.x + o.w), iy1 = std::min(y + h, o.y + o.h);
    const int iw = std::max(0, ix1 - ix0), ih = std::max(0, iy1 - iy0);
    const double inter = static_cast<double>(iw) * ih;
    const double uni = static_cast<double>(w) * h + static_cast<double>(o.w) * o.h - inter;
    return uni > 0 ? inter / uni : 0.0;
  }
};

}  // namespace respoof
