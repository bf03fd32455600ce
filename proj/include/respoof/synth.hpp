#pragma once

#include <array>

#include "respoof/facebox.hpp"
#include "respoof/image.hpp"
#include "respoof/rng.hpp"

namespace respoof {

/// Appearance signature of one procedural identity. Drawn once per identity;
/// every sample of that identity re-renders from these values under mild
/// per-sample pose/expression/lighting jitter, so identities are separable
/// while samples stay varied.
struct IdentityParams {
  std::array<double, 3> skin;
  std::array<double, 3> hair;
  std::array<double, 3> iris;
  std::array<double, 3> lip;
  double head_aspect;     // ry / rx
  double hair_line;       // v coordinate where hair ends (-1 = crown)
  double hair_side;       // side coverage of the hair cap
  double eye_dx, eye_y;   // eye placement in face units
  double eye_rx, eye_ry;
  double iris_r;          // iris radius as fraction of eye height
  double brow_dy, brow_t, brow_tilt;
  double nose_len, nose_w, nose_shade;
  double mouth_y, mouth_w, mouth_t, mouth_curve;
  bool glasses;
  double blush;           // 0 = none
};

IdentityParams sample_identity(Rng& rng);

/// Per-sample nuisance parameters (pose, expression, lighting, background).
struct SceneJitter {
  double face_cx, face_cy;  // face center, scene fraction
  double face_rx_px;        // face half-width in pixels
  double tilt_deg;
  double mouth_curve_delta;
  double eye_open;          // multiplier on eye height
  double gaze_dx;
  double gain;              // lighting gain
  std::array<double, 3> shirt;
  std::array<double, 3> bg_a, bg_b;
  double bg_angle;
  int bg_blobs;
  std::uint64_t bg_seed;
};

SceneJitter sample_jitter(Rng& rng);

struct RenderedScene {
  Image scene;
  FaceBox box;
};

/// Renders the full picture: textured background, shoulders, and the face,
/// and reports the ground-truth face box.
RenderedScene render_scene(const IdentityParams& id, const SceneJitter& jit,
                           int scene_px);

}  // namespace respoof
