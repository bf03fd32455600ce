#include "respoof/compositor.hpp"

#include <algorithm>
#include <cmath>

namespace respoof {

Image embed_face(const Image& scene, const FaceBox& box, const Image& face,
                 const CompositeMode& mode) {
  box.validate(scene.width, scene.height);
  if (face.width != box.w || face.height != box.h)
    throw RejectedInput("embed_face: face not at box dimensions");
  if (mode.kind == CompositeMode::Kind::kFeathered) {
    if (mode.feather_radius < 0 ||
        mode.feather_radius >= std::min(box.w, box.h) / 2.0)
      throw RejectedInput("embed_face: feather radius out of range");
  }

  Image out = scene;
  if (mode.kind == CompositeMode::Kind::kPaste || mode.feather_radius <= 0.0) {
    for (int y = 0; y < box.h; ++y)
      for (int x = 0; x < box.w; ++x)
        for (int c = 0; c < 3; ++c)
          out.at(box.y + y, box.x + x, c) = std::clamp(face.at(y, x, c), 0.0, 1.0);
    return out;
  }

  // Feathered: signed Chebyshev distance to the box boundary (negative
  // inside), alpha ramps linearly from 1 at -r/2 through 0.5 on the
  // boundary to 0 at +r/2.
  const double r = mode.feather_radius;
  const int x0 = box.x, x1 = box.x + box.w - 1;
  const int y0 = box.y, y1 = box.y + box.h - 1;
  const int reach = static_cast<int>(std::ceil(r / 2.0));
  const int sy0 = std::max(0, y0 - reach), sy1 = std::min(scene.height - 1, y1 + reach);
  const int sx0 = std::max(0, x0 - reach), sx1 = std::min(scene.width - 1, x1 + reach);
  for (int y = sy0; y <= sy1; ++y) {
    for (int x = sx0; x <= sx1; ++x) {
      const int dx_out = std::max({x0 - x, x - x1, 0});
      const int dy_out = std::max({y0 - y, y - y1, 0});
      double d;
      if (dx_out > 0 || dy_out > 0) {
        d = std::max(dx_out, dy_out);
      } else {
        d = -static_cast<double>(std::min({x - x0, x1 - x, y - y0, y1 - y}));
      }
      const double alpha = std::clamp(0.5 - d / r, 0.0, 1.0);
      if (alpha == 0.0) continue;
      const int fx = std::clamp(x - x0, 0, box.w - 1);
      const int fy = std::clamp(y - y0, 0, box.h - 1);
      for (int c = 0; c < 3; ++c) {
        const double f = std::clamp(face.at(fy, fx, c), 0.0, 1.0);
        out.at(y, x, c) = alpha * f + (1.0 - alpha) * scene.at(y, x, c);
      }
    }
  }
  return out;
}

}  // namespace respoof
