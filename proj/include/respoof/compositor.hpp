#pragma once

#include "respoof/facebox.hpp"
#include "respoof/image.hpp"

namespace respoof {

/// How an attacked face crop is re-introduced into the scene image.
/// paste: hard replacement of the box contents.
/// feathered: linear alpha ramp of width feather_radius centered on the box
/// boundary, hiding the seam that a hard paste leaves.
struct CompositeMode {
  enum class Kind { kPaste, kFeathered };
  Kind kind = Kind::kPaste;
  double feather_radius = 0.0;  // pixels; required < min(box w, h)/2

  static CompositeMode paste() { return {}; }
  static CompositeMode feathered(double radius) {
    return {Kind::kFeathered, radius};
  }
};

/// Embeds `face` (already at box dimensions) into `scene` at `box`.
/// Pixels outside the box (paste) or outside the box dilated by
/// feather_radius/2 (feathered) are returned bit-identical to the scene.
Image embed_face(const Image& scene, const FaceBox& box, const Image& face,
                 const CompositeMode& mode);

}  // namespace respoof
