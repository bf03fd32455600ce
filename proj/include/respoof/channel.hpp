#pragma once

#include <array>
#include <optional>
#include <string>

#include "respoof/image.hpp"
#include "respoof/rng.hpp"

#include "json.hpp"

namespace respoof {

/// Parameter ranges of the simulated rebroadcast (display-and-recapture)
/// channel. Defaults model a screen replay: small in-plane pose error,
/// mild photometric drift, slight defocus, and a hue/saturation cast.
struct ChannelSpec {
  using Range = std::array<double, 2>;

  Range rotation_deg{-5.0, 5.0};
  Range shear_deg{-5.0, 5.0};
  Range scale{0.85, 1.15};
  Range translate_frac{0.0, 0.15};   // fraction of image size, per axis
  Range perspective{0.0, 0.025};
  Range brightness{0.85, 1.15};      // multiplier
  Range contrast{0.9, 1.1};          // multiplier about mid-gray
  Range blur_sigma_px{0.0, 1.0};
  Range hue_sat_shift{-15.0, 15.0};  // additive, on a 0-255 channel scale

  /// Every range collapsed to its identity point; rebroadcast through this
  /// spec is a no-op.
  static ChannelSpec identity();

  /// Ranges stretched about their centers by `factor` (1.0 = unchanged).
  /// Used to probe attacks against a held-out, wider channel family.
  ChannelSpec widened(double factor) const;

  /// Throws RejectedInput unless every range is ordered and physical
  /// (scale > 0, blur sigma >= 0).
  void validate() const;

  nlohmann::json to_json() const;
  static ChannelSpec from_json(const nlohmann::json& j);
};

/// The six distortion groups composing one rebroadcast event. The affine
/// group bundles rotation, shear, scale and translation into a single warp.
enum class TransformGroup : int {
  kAffine = 0,
  kPerspective = 1,
  kBrightness = 2,
  kContrast = 3,
  kBlur = 4,
  kHueSat = 5,
};

constexpr int kNumTransformGroups = 6;

/// One frozen realization r(.) of the channel: concrete parameter values
/// plus the order in which the six groups are applied. Fully determines
/// apply_transform's output; resolution independent (translation is a
/// fraction of image size, blur sigma is in pixels).
struct TransformParams {
  double rotation_deg = 0.0;
  double shear_deg = 0.0;
  double scale = 1.0;
  double translate_x = 0.0;
  double translate_y = 0.0;
  double perspective = 0.0;
  double brightness = 1.0;
  double contrast = 1.0;
  double blur_sigma = 0.0;
  double hue_shift = 0.0;
  double sat_shift = 0.0;
  std::array<TransformGroup, kNumTransformGroups> order{
      TransformGroup::kAffine,     TransformGroup::kPerspective,
      TransformGroup::kBrightness, TransformGroup::kContrast,
      TransformGroup::kBlur,       TransformGroup::kHueSat};

  bool operator==(const TransformParams&) const = default;

  nlohmann::json to_json() const;
  static TransformParams from_json(const nlohmann::json& j);
};

/// Draws every parameter independently and uniformly from its range and the
/// application order uniformly from all permutations.
TransformParams sample_transform(const ChannelSpec& spec, Rng& rng);

/// Applies the composite distortion. Geometric warps resample bilinearly
/// and fill out-of-frame pixels with 0; photometric stages clip to [0,1]
/// pointwise. Output has the input's dimensions.
Image apply_transform(const Image& img, const TransformParams& params);

/// Forward pass that keeps the per-stage inputs needed for the adjoint.
struct TransformTape {
  std::array<Image, kNumTransformGroups> stage_inputs;
  const TransformParams* params = nullptr;
};

Image apply_transform_fwd(const Image& img, const TransformParams& params,
                          TransformTape& tape);

/// Adjoint of apply_transform: maps d(loss)/d(output) to d(loss)/d(input).
/// Clipping uses the pass-through subgradient on [0,1] and zero outside.
Image apply_transform_vjp(const TransformTape& tape, const Image& grad_out);

/// One simulated display-and-recapture event.
Image rebroadcast(const Image& img, const ChannelSpec& spec, Rng& rng);

// Individual stages, exposed for order-sensitivity tests.
Image stage_affine(const Image& img, const TransformParams& p);
Image stage_perspective(const Image& img, const TransformParams& p);
Image stage_brightness(const Image& img, const TransformParams& p);
Image stage_contrast(const Image& img, const TransformParams& p);
Image stage_blur(const Image& img, const TransformParams& p);
Image stage_hue_sat(const Image& img, const TransformParams& p);

}  // namespace respoof
