#include "respoof/synth.hpp"

#include <algorithm>
#include <cmath>

namespace respoof {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::array<double, 3> lerp3(const std::array<double, 3>& a,
                            const std::array<double, 3>& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t,
          a[2] + (b[2] - a[2]) * t};
}

std::array<double, 3> jitter3(std::array<double, 3> c, Rng& rng, double amp) {
  for (auto& v : c) v = std::clamp(v + rng.uniform(-amp, amp), 0.0, 1.0);
  return c;
}

// 0 below lo, 1 above hi, smooth in between.
double smooth(double x, double lo, double hi) {
  const double t = std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

// soft inside-ness of an implicit region f <= 1, edge width e on f.
double soft_in(double f, double e) { return smooth(-f, -1.0 - e, -1.0 + e); }

struct Pix {
  double r, g, b;
  void blend(const std::array<double, 3>& c, double a) {
    r += (c[0] - r) * a;
    g += (c[1] - g) * a;
    b += (c[2] - b) * a;
  }
};

}  // namespace

IdentityParams sample_identity(Rng& rng) {
  IdentityParams p;
  const double tone = rng.uniform();
  p.skin = jitter3(lerp3({0.95, 0.80, 0.69}, {0.47, 0.31, 0.22}, tone), rng, 0.04);
  const int hair_kind = rng.uniform_int(0, 4);
  static const std::array<std::array<double, 3>, 5> hair_palette{{
      {0.09, 0.07, 0.06},  // black
      {0.38, 0.24, 0.12},  // brown
      {0.78, 0.62, 0.33},  // blond
      {0.52, 0.22, 0.10},  // red
      {0.62, 0.60, 0.58},  // gray
  }};
  p.hair = jitter3(hair_palette[static_cast<size_t>(hair_kind)], rng, 0.05);
  const int iris_kind = rng.uniform_int(0, 3);
  static const std::array<std::array<double, 3>, 4> iris_palette{{
      {0.33, 0.20, 0.10},  // brown
      {0.25, 0.45, 0.65},  // blue
      {0.28, 0.48, 0.30},  // green
      {0.45, 0.45, 0.48},  // gray
  }};
  p.iris = jitter3(iris_palette[static_cast<size_t>(iris_kind)], rng, 0.04);
  const double redness = rng.uniform(0.35, 0.75);
  p.lip = lerp3(p.skin, {0.72, 0.22, 0.25}, redness);
  p.head_aspect = rng.uniform(1.08, 1.32);
  p.hair_line = rng.uniform(-0.72, -0.22);
  p.hair_side = rng.uniform(0.0, 0.55);
  p.eye_dx = rng.uniform(0.30, 0.44);
  p.eye_y = rng.uniform(-0.28, -0.12);
  p.eye_rx = rng.uniform(0.11, 0.17);
  p.eye_ry = rng.uniform(0.050, 0.085);
  p.iris_r = rng.uniform(0.55, 0.85);
  p.brow_dy = rng.uniform(0.10, 0.18);
  p.brow_t = rng.uniform(0.022, 0.060);
  p.brow_tilt = rng.uniform(-0.16, 0.16);
  p.nose_len = rng.uniform(0.28, 0.46);
  p.nose_w = rng.uniform(0.05, 0.11);
  p.nose_shade = rng.uniform(0.75, 0.90);
  p.mouth_y = rng.uniform(0.44, 0.60);
  p.mouth_w = rng.uniform(0.26, 0.46);
  p.mouth_t = rng.uniform(0.045, 0.085);
  p.mouth_curve = rng.uniform(-0.04, 0.10);
  p.glasses = rng.uniform() < 0.3;
  p.blush = rng.uniform() < 0.4 ? rng.uniform(0.08, 0.22) : 0.0;
  return p;
}

SceneJitter sample_jitter(Rng& rng) {
  SceneJitter j;
  j.face_cx = rng.uniform(0.36, 0.64);
  j.face_cy = rng.uniform(0.34, 0.52);
  j.face_rx_px = rng.uniform(20.0, 29.0);
  j.tilt_deg = rng.uniform(-6.0, 6.0);
  j.mouth_curve_delta = rng.uniform(-0.06, 0.10);
  j.eye_open = rng.uniform(0.78, 1.15);
  j.gaze_dx = rng.uniform(-0.03, 0.03);
  j.gain = rng.uniform(0.92, 1.08);
  j.shirt = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  j.bg_a = {rng.uniform(0.2, 0.95), rng.uniform(0.2, 0.95), rng.uniform(0.2, 0.95)};
  j.bg_b = {rng.uniform(0.2, 0.95), rng.uniform(0.2, 0.95), rng.uniform(0.2, 0.95)};
  j.bg_angle = rng.uniform(0.0, 2.0 * kPi);
  j.bg_blobs = rng.uniform_int(2, 5);
  j.bg_seed = rng.next_u64();
  return j;
}

RenderedScene render_scene(const IdentityParams& id, const SceneJitter& jit,
                           int scene_px) {
  const int S = scene_px;
  Image img(S, S);

  // --- background: diagonal gradient + soft blobs + hash noise ---
  Rng bg_rng(jit.bg_seed);
  struct Blob {
    double cx, cy, r;
    std::array<double, 3> color;
  };
  std::vector<Blob> blobs(static_cast<size_t>(jit.bg_blobs));
  for (auto& bl : blobs) {
    bl.cx = bg_rng.uniform(0.0, 1.0) * S;
    bl.cy = bg_rng.uniform(0.0, 1.0) * S;
    bl.r = bg_rng.uniform(0.12, 0.35) * S;
    bl.color = {bg_rng.uniform(0.15, 0.95), bg_rng.uniform(0.15, 0.95),
                bg_rng.uniform(0.15, 0.95)};
  }
  const double ca = std::cos(jit.bg_angle), sa = std::sin(jit.bg_angle);
  const std::uint64_t noise_seed = bg_rng.next_u64();

  // --- face geometry ---
  const double rx = jit.face_rx_px;
  const double ry = rx * id.head_aspect;
  const double cx = jit.face_cx * S;
  const double cy = jit.face_cy * S;
  const double ct = std::cos(jit.tilt_deg * kPi / 180.0);
  const double st = std::sin(jit.tilt_deg * kPi / 180.0);
  const double edge = 1.6 / rx;  // anti-aliasing width in face units

  const double eye_ry = id.eye_ry * jit.eye_open;
  const double mouth_curve = id.mouth_curve + jit.mouth_curve_delta;

  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      // background
      const double t = smooth((ca * x + sa * y) / S, -0.2, 1.2);
      auto bgc = lerp3(jit.bg_a, jit.bg_b, t);
      Pix px{bgc[0], bgc[1], bgc[2]};
      for (const auto& bl : blobs) {
        const double d2 = ((x - bl.cx) * (x - bl.cx) + (y - bl.cy) * (y - bl.cy)) /
                          (bl.r * bl.r);
        px.blend(bl.color, 0.55 * soft_in(d2, 0.35));
      }
      // deterministic speckle
      const std::uint64_t hv = splitmix64(noise_seed ^ (static_cast<std::uint64_t>(y) << 20) ^
                                          static_cast<std::uint64_t>(x));
      const double noise = (static_cast<double>(hv >> 40) / 16777216.0 - 0.5) * 0.05;
      px.r = std::clamp(px.r + noise, 0.0, 1.0);
      px.g = std::clamp(px.g + noise, 0.0, 1.0);
      px.b = std::clamp(px.b + noise, 0.0, 1.0);

      // shoulders / shirt: a soft trapezoid under the head
      {
        const double sy = (y - (cy + 1.18 * ry)) / (0.9 * ry);
        const double sx = (x - cx) / (2.6 * rx);
        if (sy > -0.2) {
          const double body = soft_in(sx * sx + std::max(0.0, 0.25 - sy), 0.15);
          px.blend(jit.shirt, body);
        }
      }

      // face-local frame (tilted)
      const double ux = ((x - cx) * ct + (y - cy) * st) / rx;
      const double vy = (-(x - cx) * st + (y - cy) * ct) / ry;
      const double head = ux * ux + vy * vy;
      if (head < 1.6) {
        // skin with simple lateral+vertical shading
        const double shade = jit.gain * (1.0 - 0.10 * vy - 0.06 * ux * ux);
        std::array<double, 3> skin{std::clamp(id.skin[0] * shade, 0.0, 1.0),
                                   std::clamp(id.skin[1] * shade, 0.0, 1.0),
                                   std::clamp(id.skin[2] * shade, 0.0, 1.0)};
        const double face_a = soft_in(head, edge);
        px.blend(skin, face_a);

        if (face_a > 0.0) {
          // hair cap
          const double hairness =
              smooth(-vy, -id.hair_line - 0.06, -id.hair_line + 0.06) +
              id.hair_side * smooth(std::abs(ux), 0.82, 0.98) * smooth(-vy, 0.05, 0.25);
          px.blend(id.hair, face_a * std::clamp(hairness, 0.0, 1.0));

          // blush
          if (id.blush > 0) {
            const double bx = (std::abs(ux) - 0.52) / 0.16;
            const double by = (vy - 0.18) / 0.14;
            px.blend({0.85, 0.45, 0.45}, face_a * id.blush * soft_in(bx * bx + by * by, 0.4));
          }

          // eyes
          for (int side = -1; side <= 1; side += 2) {
            const double ex = (ux - side * id.eye_dx) / id.eye_rx;
            const double ey = (vy - id.eye_y) / eye_ry;
            const double eye = ex * ex + ey * ey;
            px.blend({0.97, 0.97, 0.96}, face_a * soft_in(eye, 0.25));
            const double ix = (ux - side * id.eye_dx - jit.gaze_dx) /
                              (id.eye_rx * id.iris_r * 0.9);
            const double iy = (vy - id.eye_y) / (eye_ry * id.iris_r * 1.6);
            const double iris = ix * ix + iy * iy;
            if (eye < 1.1) {
              px.blend(id.iris, face_a * soft_in(iris, 0.3));
              px.blend({0.05, 0.05, 0.05}, face_a * soft_in(iris / 0.24, 0.5));
            }
            // eyebrow: tilted soft bar
            const double bx = ux - side * id.eye_dx;
            const double by = vy - (id.eye_y - id.brow_dy) + side * id.brow_tilt * bx;
            const double brow = (bx * bx) / (id.eye_rx * 1.5 * id.eye_rx * 1.5) +
                                (by * by) / (id.brow_t * id.brow_t);
            px.blend(lerp3(id.hair, {0.1, 0.08, 0.06}, 0.4), face_a * soft_in(brow, 0.4));
            // glasses ring
            if (id.glasses) {
              const double ring = ex * ex + (vy - id.eye_y) * (vy - id.eye_y) /
                                                (id.eye_rx * id.eye_rx) * 0.8;
              const double band = soft_in(ring / 2.4, 0.22) - soft_in(ring / 1.5, 0.22);
              px.blend({0.12, 0.10, 0.10}, face_a * std::clamp(band, 0.0, 1.0) * 0.9);
            }
          }
          if (id.glasses) {
            // bridge
            const double gy = (vy - id.eye_y) / 0.035;
            const double gx = ux / (id.eye_dx * 0.75);
            px.blend({0.12, 0.10, 0.10},
                     face_a * soft_in(gx * gx * 0.8 + gy * gy, 0.4) * 0.8);
          }

          // nose: darker wedge from between the eyes down
          {
            const double ny0 = id.eye_y + 0.08;
            const double nprog = (vy - ny0) / id.nose_len;
            if (nprog > -0.1 && nprog < 1.15) {
              const double halfw = id.nose_w * (0.35 + 0.65 * std::clamp(nprog, 0.0, 1.0));
              const double nx = ux / halfw;
              const double shade_n = soft_in(nx * nx + std::max(0.0, nprog - 1.0) * 6.0, 0.5);
              std::array<double, 3> nose{skin[0] * id.nose_shade, skin[1] * id.nose_shade,
                                         skin[2] * id.nose_shade};
              px.blend(nose, face_a * shade_n * 0.8);
            }
          }

          // mouth: curved soft ellipse
          {
            const double mx = ux / id.mouth_w;
            const double my = (vy - (id.mouth_y + mouth_curve * (mx * mx - 0.5))) / id.mouth_t;
            px.blend(id.lip, face_a * soft_in(mx * mx + my * my, 0.3));
          }
        }
      }

      img.at(y, x, 0) = std::clamp(px.r, 0.0, 1.0);
      img.at(y, x, 1) = std::clamp(px.g, 0.0, 1.0);
      img.at(y, x, 2) = std::clamp(px.b, 0.0, 1.0);
    }
  }

  // ground-truth box: head ellipse extent (tilt included) plus margin
  const double span_x = 1.12 * (rx * ct + ry * std::abs(st));
  const double span_y = 1.14 * (rx * std::abs(st) + ry * ct);
  int bx0 = static_cast<int>(std::floor(cx - span_x));
  int by0 = static_cast<int>(std::floor(cy - span_y));
  int bx1 = static_cast<int>(std::ceil(cx + span_x));
  int by1 = static_cast<int>(std::ceil(cy + span_y));
  bx0 = std::clamp(bx0, 0, S - 2);
  by0 = std::clamp(by0, 0, S - 2);
  bx1 = std::clamp(bx1, bx0 + 1, S - 1);
  by1 = std::clamp(by1, by0 + 1, S - 1);
  RenderedScene out;
  out.box = FaceBox{bx0, by0, bx1 - bx0 + 1, by1 - by0 + 1};
  out.scene = std::move(img);
  return out;
}

}  // namespace respoof
