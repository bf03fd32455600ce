#include "respoof/channel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "respoof/errors.hpp"

namespace respoof {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_range(const ChannelSpec::Range& r, const char* name) {
  if (!(r[0] <= r[1])) throw RejectedInput(std::string("channel range not ordered: ") + name);
}

const char* group_name(TransformGroup g) {
  switch (g) {
    case TransformGroup::kAffine: return "affine";
    case TransformGroup::kPerspective: return "perspective";
    case TransformGroup::kBrightness: return "brightness";
    case TransformGroup::kContrast: return "contrast";
    case TransformGroup::kBlur: return "blur";
    case TransformGroup::kHueSat: return "hue_sat";
  }
  return "?";
}

TransformGroup group_from_name(const std::string& s) {
  for (int i = 0; i < kNumTransformGroups; ++i) {
    auto g = static_cast<TransformGroup>(i);
    if (s == group_name(g)) return g;
  }
  throw RejectedInput("unknown transform group: " + s);
}

}  // namespace

ChannelSpec ChannelSpec::identity() {
  ChannelSpec s;
  s.rotation_deg = {0.0, 0.0};
  s.shear_deg = {0.0, 0.0};
  s.scale = {1.0, 1.0};
  s.translate_frac = {0.0, 0.0};
  s.perspective = {0.0, 0.0};
  s.brightness = {1.0, 1.0};
  s.contrast = {1.0, 1.0};
  s.blur_sigma_px = {0.0, 0.0};
  s.hue_sat_shift = {0.0, 0.0};
  return s;
}

ChannelSpec ChannelSpec::widened(double factor) const {
  auto stretch = [factor](Range r, double lo_floor, bool has_floor) {
    const double c = 0.5 * (r[0] + r[1]);
    Range out{c - factor * (c - r[0]), c + factor * (r[1] - c)};
    if (has_floor) out[0] = std::max(out[0], lo_floor);
    return out;
  };
  ChannelSpec s = *this;
  s.rotation_deg = stretch(rotation_deg, 0, false);
  s.shear_deg = stretch(shear_deg, 0, false);
  s.scale = stretch(scale, 1e-3, true);
  s.translate_frac = stretch(translate_frac, 0.0, true);
  s.perspective = stretch(perspective, 0.0, true);
  s.brightness = stretch(brightness, 0.0, true);
  s.contrast = stretch(contrast, 0.0, true);
  s.blur_sigma_px = stretch(blur_sigma_px, 0.0, true);
  s.hue_sat_shift = stretch(hue_sat_shift, 0, false);
  return s;
}

void ChannelSpec::validate() const {
  check_range(rotation_deg, "rotation_deg");
  check_range(shear_deg, "shear_deg");
  check_range(scale, "scale");
  check_range(translate_frac, "translate_frac");
  check_range(perspective, "perspective");
  check_range(brightness, "brightness");
  check_range(contrast, "contrast");
  check_range(blur_sigma_px, "blur_sigma_px");
  check_range(hue_sat_shift, "hue_sat_shift");
  if (scale[0] <= 0) throw RejectedInput("channel: scale must be positive");
  if (blur_sigma_px[0] < 0) throw RejectedInput("channel: blur sigma must be >= 0");
}

nlohmann::json ChannelSpec::to_json() const {
  return nlohmann::json{
      {"rotation_deg", rotation_deg},   {"shear_deg", shear_deg},
      {"scale", scale},                 {"translate_frac", translate_frac},
      {"perspective", perspective},     {"brightness", brightness},
      {"contrast", contrast},           {"blur_sigma_px", blur_sigma_px},
      {"hue_sat_shift", hue_sat_shift}};
}

ChannelSpec ChannelSpec::from_json(const nlohmann::json& j) {
  ChannelSpec s;
  j.at("rotation_deg").get_to(s.rotation_deg);
  j.at("shear_deg").get_to(s.shear_deg);
  j.at("scale").get_to(s.scale);
  j.at("translate_frac").get_to(s.translate_frac);
  j.at("perspective").get_to(s.perspective);
  j.at("brightness").get_to(s.brightness);
  j.at("contrast").get_to(s.contrast);
  j.at("blur_sigma_px").get_to(s.blur_sigma_px);
  j.at("hue_sat_shift").get_to(s.hue_sat_shift);
  s.validate();
  return s;
}

nlohmann::json TransformParams::to_json() const {
  nlohmann::json order_j = nlohmann::json::array();
  for (auto g : order) order_j.push_back(group_name(g));
  return nlohmann::json{
      {"rotation_deg", rotation_deg}, {"shear_deg", shear_deg},
      {"scale", scale},               {"translate_x", translate_x},
      {"translate_y", translate_y},   {"perspective", perspective},
      {"brightness", brightness},     {"contrast", contrast},
      {"blur_sigma", blur_sigma},     {"hue_shift", hue_shift},
      {"sat_shift", sat_shift},       {"order", order_j}};
}

TransformParams TransformParams::from_json(const nlohmann::json& j) {
  TransformParams p;
  j.at("rotation_deg").get_to(p.rotation_deg);
  j.at("shear_deg").get_to(p.shear_deg);
  j.at("scale").get_to(p.scale);
  j.at("translate_x").get_to(p.translate_x);
  j.at("translate_y").get_to(p.translate_y);
  j.at("perspective").get_to(p.perspective);
  j.at("brightness").get_to(p.brightness);
  j.at("contrast").get_to(p.contrast);
  j.at("blur_sigma").get_to(p.blur_sigma);
  j.at("hue_shift").get_to(p.hue_shift);
  j.at("sat_shift").get_to(p.sat_shift);
  const auto& order_j = j.at("order");
  if (order_j.size() != kNumTransformGroups) throw RejectedInput("order: wrong length");
  for (int i = 0; i < kNumTransformGroups; ++i) {
    p.order[static_cast<size_t>(i)] = group_from_name(order_j[static_cast<size_t>(i)].get<std::string>());
  }
  return p;
}

TransformParams sample_transform(const ChannelSpec& spec, Rng& rng) {
  spec.validate();
  TransformParams p;
  p.rotation_deg = rng.uniform(spec.rotation_deg[0], spec.rotation_deg[1]);
  p.shear_deg = rng.uniform(spec.shear_deg[0], spec.shear_deg[1]);
  p.scale = rng.uniform(spec.scale[0], spec.scale[1]);
  p.translate_x = rng.uniform(spec.translate_frac[0], spec.translate_frac[1]);
  p.translate_y = rng.uniform(spec.translate_frac[0], spec.translate_frac[1]);
  p.perspective = rng.uniform(spec.perspective[0], spec.perspective[1]);
  p.brightness = rng.uniform(spec.brightness[0], spec.brightness[1]);
  p.contrast = rng.uniform(spec.contrast[0], spec.contrast[1]);
  p.blur_sigma = rng.uniform(spec.blur_sigma_px[0], spec.blur_sigma_px[1]);
  p.hue_shift = rng.uniform(spec.hue_sat_shift[0], spec.hue_sat_shift[1]);
  p.sat_shift = rng.uniform(spec.hue_sat_shift[0], spec.hue_sat_shift[1]);
  const auto perm = rng.permutation(kNumTransformGroups);
  for (int i = 0; i < kNumTransformGroups; ++i) {
    p.order[static_cast<size_t>(i)] = static_cast<TransformGroup>(perm[static_cast<size_t>(i)]);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Geometric warps. Output pixel (x, y) samples the input at map(x, y) with
// bilinear weights; taps outside the frame contribute zero. The adjoint
// scatters gradients back through the same weights.
// ---------------------------------------------------------------------------

namespace {

template <typename MapFn>
Image warp(const Image& img, MapFn map) {
  Image out(img.height, img.width);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      double fx, fy;
      map(x, y, fx, fy);
      const int x0 = static_cast<int>(std::floor(fx));
      const int y0 = static_cast<int>(std::floor(fy));
      const double wx = fx - x0;
      const double wy = fy - y0;
      const double w00 = (1 - wx) * (1 - wy), w10 = wx * (1 - wy);
      const double w01 = (1 - wx) * wy, w11 = wx * wy;
      for (int c = 0; c < 3; ++c) {
        double v = 0.0;
        if (y0 >= 0 && y0 < img.height) {
          if (x0 >= 0 && x0 < img.width) v += w00 * img.at(y0, x0, c);
          if (x0 + 1 >= 0 && x0 + 1 < img.width) v += w10 * img.at(y0, x0 + 1, c);
        }
        if (y0 + 1 >= 0 && y0 + 1 < img.height) {
          if (x0 >= 0 && x0 < img.width) v += w01 * img.at(y0 + 1, x0, c);
          if (x0 + 1 >= 0 && x0 + 1 < img.width) v += w11 * img.at(y0 + 1, x0 + 1, c);
        }
        out.at(y, x, c) = v;
      }
    }
  }
  return out;
}

template <typename MapFn>
Image warp_vjp(int in_h, int in_w, const Image& grad_out, MapFn map) {
  Image grad_in(in_h, in_w);
  for (int y = 0; y < grad_out.height; ++y) {
    for (int x = 0; x < grad_out.width; ++x) {
      double fx, fy;
      map(x, y, fx, fy);
      const int x0 = static_cast<int>(std::floor(fx));
      const int y0 = static_cast<int>(std::floor(fy));
      const double wx = fx - x0;
      const double wy = fy - y0;
      const double w00 = (1 - wx) * (1 - wy), w10 = wx * (1 - wy);
      const double w01 = (1 - wx) * wy, w11 = wx * wy;
      for (int c = 0; c < 3; ++c) {
        const double g = grad_out.at(y, x, c);
        if (g == 0.0) continue;
        if (y0 >= 0 && y0 < in_h) {
          if (x0 >= 0 && x0 < in_w) grad_in.at(y0, x0, c) += g * w00;
          if (x0 + 1 >= 0 && x0 + 1 < in_w) grad_in.at(y0, x0 + 1, c) += g * w10;
        }
        if (y0 + 1 >= 0 && y0 + 1 < in_h) {
          if (x0 >= 0 && x0 < in_w) grad_in.at(y0 + 1, x0, c) += g * w01;
          if (x0 + 1 >= 0 && x0 + 1 < in_w) grad_in.at(y0 + 1, x0 + 1, c) += g * w11;
        }
      }
    }
  }
  return grad_in;
}

bool affine_is_identity(const TransformParams& p) {
  return p.rotation_deg == 0.0 && p.shear_deg == 0.0 && p.scale == 1.0 &&
         p.translate_x == 0.0 && p.translate_y == 0.0;
}

/// Inverse map of the affine stage: output pixel -> source position.
/// Forward model: p_out = A (p_in - c) + c + t with A = R(rot) Sh(shear) S(s)
/// about the image center c, t = (tx*W, ty*H).
struct AffineInverse {
  double inv[4];
  double cx, cy, tx, ty;

  AffineInverse(int h, int w, const TransformParams& p) {
    const double th = p.rotation_deg * kPi / 180.0;
    const double sh = std::tan(p.shear_deg * kPi / 180.0);
    const double s = p.scale;
    const double a00 = s * std::cos(th), a01 = s * (std::cos(th) * sh - std::sin(th));
    const double a10 = s * std::sin(th), a11 = s * (std::sin(th) * sh + std::cos(th));
    const double det = a00 * a11 - a01 * a10;
    inv[0] = a11 / det;
    inv[1] = -a01 / det;
    inv[2] = -a10 / det;
    inv[3] = a00 / det;
    cx = (w - 1) * 0.5;
    cy = (h - 1) * 0.5;
    tx = p.translate_x * w;
    ty = p.translate_y * h;
  }

  void operator()(int x, int y, double& fx, double& fy) const {
    const double dx = x - cx - tx;
    const double dy = y - cy - ty;
    fx = inv[0] * dx + inv[1] * dy + cx;
    fy = inv[2] * dx + inv[3] * dy + cy;
  }
};

/// Solves an n x n linear system in place (partial pivoting).
void solve_linear(int n, double* a, double* b) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
    }
    for (int k = 0; k < n; ++k) std::swap(a[col * n + k], a[piv * n + k]);
    std::swap(b[col], b[piv]);
    const double d = a[col * n + col];
    for (int r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / d;
      for (int k = col; k < n; ++k) a[r * n + k] -= f * a[col * n + k];
      b[r] -= f * b[col];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int k = r + 1; k < n; ++k) s -= a[r * n + k] * b[k];
    b[r] = s / a[r * n + r];
  }
}

/// Keystone tilt parameterized by the single perspective scalar: the top
/// corners of the source quad are pulled inward by p * width, as if the
/// displayed image were photographed slightly from below. A one-parameter
/// family keeps TransformParams a complete record of the realization.
struct PerspectiveInverse {
  double h_[8];  // homography output -> source, last element fixed to 1

  PerspectiveInverse(int h, int w, const TransformParams& p) {
    const double W = w - 1.0, H = h - 1.0;
    const double d = p.perspective * W;
    // output corner -> source corner
    const double xo[4] = {0, W, 0, W};
    const double yo[4] = {0, 0, H, H};
    const double xs[4] = {d, W - d, 0, W};
    const double ys[4] = {0, 0, H, H};
    double A[64] = {0};
    double b[8];
    for (int i = 0; i < 4; ++i) {
      double* r1 = A + (2 * i) * 8;
      r1[0] = xo[i]; r1[1] = yo[i]; r1[2] = 1;
      r1[6] = -xo[i] * xs[i]; r1[7] = -yo[i] * xs[i];
      b[2 * i] = xs[i];
      double* r2 = A + (2 * i + 1) * 8;
      r2[3] = xo[i]; r2[4] = yo[i]; r2[5] = 1;
      r2[6] = -xo[i] * ys[i]; r2[7] = -yo[i] * ys[i];
      b[2 * i + 1] = ys[i];
    }
    solve_linear(8, A, b);
    std::copy(b, b + 8, h_);
  }

  void operator()(int x, int y, double& fx, double& fy) const {
    const double w = h_[6] * x + h_[7] * y + 1.0;
    fx = (h_[0] * x + h_[1] * y + h_[2]) / w;
    fy = (h_[3] * x + h_[4] * y + h_[5]) / w;
  }
};

// ---------------------------------------------------------------------------
// Pointwise photometric stages. Each computes a pre-clip value and clamps;
// the adjoint passes gradients through where the pre-clip value lies in
// [0,1] and zeroes them elsewhere.
// ---------------------------------------------------------------------------

template <typename Fn>
Image pointwise(const Image& img, Fn pre) {
  Image out(img.height, img.width);
  for (size_t i = 0; i < img.data.size(); ++i) {
    out.data[i] = std::clamp(pre(img.data[i]), 0.0, 1.0);
  }
  return out;
}

template <typename Fn>
Image pointwise_vjp(const Image& input, const Image& grad_out, Fn pre, double slope) {
  Image grad_in(input.height, input.width);
  for (size_t i = 0; i < input.data.size(); ++i) {
    const double v = pre(input.data[i]);
    grad_in.data[i] = (v >= 0.0 && v <= 1.0) ? grad_out.data[i] * slope : 0.0;
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Gaussian blur: separable, truncated at radius ceil(3*sigma), with the
// kernel renormalized over in-frame taps so constants are preserved.
// ---------------------------------------------------------------------------

int blur_radius(double sigma) {
  if (sigma <= 0.0) return 0;
  return static_cast<int>(std::ceil(3.0 * sigma));
}

std::vector<double> blur_kernel(double sigma) {
  const int r = blur_radius(sigma);
  std::vector<double> w(static_cast<size_t>(r) + 1);
  for (int k = 0; k <= r; ++k) {
    w[static_cast<size_t>(k)] = std::exp(-0.5 * (k * k) / (sigma * sigma));
  }
  return w;
}

// axis 0: blur along x (rows); axis 1: blur along y.
void blur_pass(const Image& in, Image& out, const std::vector<double>& w, int axis) {
  const int r = static_cast<int>(w.size()) - 1;
  const int n = axis == 0 ? in.width : in.height;
  const int m = axis == 0 ? in.height : in.width;
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) {
      const int k0 = std::max(-r, -i);
      const int k1 = std::min(r, n - 1 - i);
      double norm = 0.0;
      for (int k = k0; k <= k1; ++k) norm += w[static_cast<size_t>(std::abs(k))];
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = k0; k <= k1; ++k) {
          const double wk = w[static_cast<size_t>(std::abs(k))];
          acc += wk * (axis == 0 ? in.at(j, i + k, c) : in.at(i + k, j, c));
        }
        if (axis == 0) out.at(j, i, c) = acc / norm;
        else out.at(i, j, c) = acc / norm;
      }
    }
  }
}

// Adjoint of one renormalized pass. out(i) = sum_k w(|k|) in(i+k) / N(i)
// implies gin(x) = sum_i w(|x-i|) gout(i) / N(i).
void blur_pass_vjp(const Image& gout, Image& gin, const std::vector<double>& w, int axis) {
  const int r = static_cast<int>(w.size()) - 1;
  const int n = axis == 0 ? gout.width : gout.height;
  const int m = axis == 0 ? gout.height : gout.width;
  std::vector<double> inv_norm(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int k0 = std::max(-r, -i);
    const int k1 = std::min(r, n - 1 - i);
    double norm = 0.0;
    for (int k = k0; k <= k1; ++k) norm += w[static_cast<size_t>(std::abs(k))];
    inv_norm[static_cast<size_t>(i)] = 1.0 / norm;
  }
  for (int j = 0; j < m; ++j) {
    for (int x = 0; x < n; ++x) {
      const int i0 = std::max(0, x - r);
      const int i1 = std::min(n - 1, x + r);
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = i0; i <= i1; ++i) {
          acc += w[static_cast<size_t>(std::abs(x - i))] * inv_norm[static_cast<size_t>(i)] *
                 (axis == 0 ? gout.at(j, i, c) : gout.at(i, j, c));
        }
        if (axis == 0) gin.at(j, x, c) = acc;
        else gin.at(x, j, c) = acc;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Hue/saturation shift. Works per pixel through an RGB->HSV->RGB chain,
// written once over a scalar type so the same code yields values (double)
// and Jacobians (Dual3, forward-mode with three derivative slots).
// ---------------------------------------------------------------------------

struct Dual3 {
  double v = 0.0;
  std::array<double, 3> d{0, 0, 0};

  Dual3() = default;
  Dual3(double val) : v(val) {}
  Dual3(double val, int slot) : v(val) { d[static_cast<size_t>(slot)] = 1.0; }
};

inline Dual3 operator+(const Dual3& a, const Dual3& b) {
  Dual3 r(a.v + b.v);
  for (int i = 0; i < 3; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}
inline Dual3 operator-(const Dual3& a, const Dual3& b) {
  Dual3 r(a.v - b.v);
  for (int i = 0; i < 3; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}
inline Dual3 operator*(const Dual3& a, const Dual3& b) {
  Dual3 r(a.v * b.v);
  for (int i = 0; i < 3; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}
inline Dual3 operator/(const Dual3& a, const Dual3& b) {
  Dual3 r(a.v / b.v);
  for (int i = 0; i < 3; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) / (b.v * b.v);
  return r;
}

inline double value_of(double x) { return x; }
inline double value_of(const Dual3& x) { return x.v; }

template <typename T>
T select_max3(const T& a, const T& b, const T& c) {
  // first-match subgradient at ties
  if (value_of(a) >= value_of(b) && value_of(a) >= value_of(c)) return a;
  if (value_of(b) >= value_of(c)) return b;
  return c;
}
template <typename T>
T select_min3(const T& a, const T& b, const T& c) {
  if (value_of(a) <= value_of(b) && value_of(a) <= value_of(c)) return a;
  if (value_of(b) <= value_of(c)) return b;
  return c;
}

template <typename T>
T wrap01(const T& x) {
  return x - T(std::floor(value_of(x)));
}

template <typename T>
T clamp01_sub(const T& x) {
  if (value_of(x) < 0.0) return T(0.0);
  if (value_of(x) > 1.0) return T(1.0);
  return x;
}

/// dh, ds are shifts already scaled to [0,1] units (input / 255).
template <typename T>
void hue_sat_pixel(const T& r, const T& g, const T& b, double dh, double ds,
                   T out[3]) {
  constexpr double kEps = 1e-12;
  const T mx = select_max3(r, g, b);
  const T mn = select_min3(r, g, b);
  const T chroma = mx - mn;
  T s = (value_of(mx) > kEps) ? chroma / mx : T(0.0);
  T h(0.0);
  if (value_of(chroma) > kEps) {
    if (value_of(mx) == value_of(r)) {
      h = wrap01((g - b) / chroma / T(6.0));
    } else if (value_of(mx) == value_of(g)) {
      h = ((b - r) / chroma + T(2.0)) / T(6.0);
    } else {
      h = ((r - g) / chroma + T(4.0)) / T(6.0);
    }
  }
  const T h2 = wrap01(h + T(dh));
  const T s2 = clamp01_sub(s + T(ds));
  const T v2 = mx;

  const T h6 = h2 * T(6.0);
  int sector = static_cast<int>(std::floor(value_of(h6)));
  sector = std::clamp(sector, 0, 5);
  const T f = h6 - T(static_cast<double>(sector));
  const T p = v2 * (T(1.0) - s2);
  const T q = v2 * (T(1.0) - f * s2);
  const T t = v2 * (T(1.0) - (T(1.0) - f) * s2);
  switch (sector) {
    case 0: out[0] = v2; out[1] = t; out[2] = p; break;
    case 1: out[0] = q; out[1] = v2; out[2] = p; break;
    case 2: out[0] = p; out[1] = v2; out[2] = t; break;
    case 3: out[0] = p; out[1] = q; out[2] = v2; break;
    case 4: out[0] = t; out[1] = p; out[2] = v2; break;
    default: out[0] = v2; out[1] = p; out[2] = q; break;
  }
  for (int i = 0; i < 3; ++i) out[i] = clamp01_sub(out[i]);
}

}  // namespace

// ---------------------------------------------------------------------------
// Stage entry points.
// ---------------------------------------------------------------------------

Image stage_affine(const Image& img, const TransformParams& p) {
  if (affine_is_identity(p)) return img;
  return warp(img, AffineInverse(img.height, img.width, p));
}

Image stage_perspective(const Image& img, const TransformParams& p) {
  if (p.perspective == 0.0) return img;
  return warp(img, PerspectiveInverse(img.height, img.width, p));
}

Image stage_brightness(const Image& img, const TransformParams& p) {
  if (p.brightness == 1.0) return img;
  const double b = p.brightness;
  return pointwise(img, [b](double v) { return b * v; });
}

Image stage_contrast(const Image& img, const TransformParams& p) {
  if (p.contrast == 1.0) return img;
  const double c = p.contrast;
  return pointwise(img, [c](double v) { return (v - 0.5) * c + 0.5; });
}

Image stage_blur(const Image& img, const TransformParams& p) {
  if (blur_radius(p.blur_sigma) == 0) return img;
  const auto w = blur_kernel(p.blur_sigma);
  Image tmp(img.height, img.width), out(img.height, img.width);
  blur_pass(img, tmp, w, 0);
  blur_pass(tmp, out, w, 1);
  return out;
}

Image stage_hue_sat(const Image& img, const TransformParams& p) {
  if (p.hue_shift == 0.0 && p.sat_shift == 0.0) return img;
  const double dh = p.hue_shift / 255.0;
  const double ds = p.sat_shift / 255.0;
  Image out(img.height, img.width);
  for (size_t i = 0; i < img.data.size(); i += 3) {
    double rgb[3];
    hue_sat_pixel(img.data[i], img.data[i + 1], img.data[i + 2], dh, ds, rgb);
    out.data[i] = rgb[0];
    out.data[i + 1] = rgb[1];
    out.data[i + 2] = rgb[2];
  }
  return out;
}

namespace {

Image apply_stage(TransformGroup g, const Image& img, const TransformParams& p) {
  switch (g) {
    case TransformGroup::kAffine: return stage_affine(img, p);
    case TransformGroup::kPerspective: return stage_perspective(img, p);
    case TransformGroup::kBrightness: return stage_brightness(img, p);
    case TransformGroup::kContrast: return stage_contrast(img, p);
    case TransformGroup::kBlur: return stage_blur(img, p);
    case TransformGroup::kHueSat: return stage_hue_sat(img, p);
  }
  throw RejectedInput("apply_stage: bad group");
}

Image stage_vjp(TransformGroup g, const Image& input, const TransformParams& p,
                const Image& grad_out) {
  switch (g) {
    case TransformGroup::kAffine:
      if (affine_is_identity(p)) return grad_out;
      return warp_vjp(input.height, input.width, grad_out,
                      AffineInverse(input.height, input.width, p));
    case TransformGroup::kPerspective:
      if (p.perspective == 0.0) return grad_out;
      return warp_vjp(input.height, input.width, grad_out,
                      PerspectiveInverse(input.height, input.width, p));
    case TransformGroup::kBrightness: {
      if (p.brightness == 1.0) return grad_out;
      const double b = p.brightness;
      return pointwise_vjp(input, grad_out, [b](double v) { return b * v; }, b);
    }
    case TransformGroup::kContrast: {
      if (p.contrast == 1.0) return grad_out;
      const double c = p.contrast;
      return pointwise_vjp(input, grad_out, [c](double v) { return (v - 0.5) * c + 0.5; }, c);
    }
    case TransformGroup::kBlur: {
      if (blur_radius(p.blur_sigma) == 0) return grad_out;
      const auto w = blur_kernel(p.blur_sigma);
      Image tmp(input.height, input.width), gin(input.height, input.width);
      blur_pass_vjp(grad_out, tmp, w, 1);  // reverse order of the forward passes
      blur_pass_vjp(tmp, gin, w, 0);
      return gin;
    }
    case TransformGroup::kHueSat: {
      if (p.hue_shift == 0.0 && p.sat_shift == 0.0) return grad_out;
      const double dh = p.hue_shift / 255.0;
      const double ds = p.sat_shift / 255.0;
      Image gin(input.height, input.width);
      for (size_t i = 0; i < input.data.size(); i += 3) {
        Dual3 rgb[3];
        hue_sat_pixel(Dual3(input.data[i], 0), Dual3(input.data[i + 1], 1),
                      Dual3(input.data[i + 2], 2), dh, ds, rgb);
        for (int in_c = 0; in_c < 3; ++in_c) {
          double acc = 0.0;
          for (int out_c = 0; out_c < 3; ++out_c) {
            acc += grad_out.data[i + static_cast<size_t>(out_c)] *
                   rgb[out_c].d[static_cast<size_t>(in_c)];
          }
          gin.data[i + static_cast<size_t>(in_c)] = acc;
        }
      }
      return gin;
    }
  }
  throw RejectedInput("stage_vjp: bad group");
}

}  // namespace

Image apply_transform(const Image& img, const TransformParams& params) {
  Image cur = img;
  for (auto g : params.order) cur = apply_stage(g, cur, params);
  return cur;
}

Image apply_transform_fwd(const Image& img, const TransformParams& params,
                          TransformTape& tape) {
  tape.params = &params;
  Image cur = img;
  for (int i = 0; i < kNumTransformGroups; ++i) {
    tape.stage_inputs[static_cast<size_t>(i)] = cur;
    cur = apply_stage(params.order[static_cast<size_t>(i)], cur, params);
  }
  return cur;
}

Image apply_transform_vjp(const TransformTape& tape, const Image& grad_out) {
  if (tape.params == nullptr) throw RejectedInput("vjp: tape not populated");
  const TransformParams& p = *tape.params;
  Image grad = grad_out;
  for (int i = kNumTransformGroups - 1; i >= 0; --i) {
    grad = stage_vjp(p.order[static_cast<size_t>(i)], tape.stage_inputs[static_cast<size_t>(i)], p, grad);
  }
  return grad;
}

Image rebroadcast(const Image& img, const ChannelSpec& spec, Rng& rng) {
  return apply_transform(img, sample_transform(spec, rng));
}

}  // namespace respoof
