#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace respoof {

/// H x W x 3 grid of real intensities in [0,1], interleaved row-major.
/// This is the working currency of the whole pipeline: scenes, face crops,
/// perturbations and gradients all use it (gradients are allowed to leave
/// the [0,1] range).
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // height * width * 3

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<size_t>(h) * w * 3, fill) {}

  double& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width;
  }
};

/// 8-bit companion used for storage (PNG on disk, corpora in memory).
struct Image8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Image8() = default;
  Image8(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, 0) {}
};

Image8 quantize(const Image& img);
Image dequantize(const Image8& img);

void clip01(Image& img);
double max_abs_diff(const Image& a, const Image& b);
double mse(const Image& a, const Image& b);

/// Rectangular crop; the box must lie inside the image.
Image crop(const Image& img, int x, int y, int w, int h);

/// Bilinear resize with half-pixel centers and clamp-to-edge sampling.
Image resize_bilinear(const Image& img, int out_h, int out_w);

/// Adjoint of resize_bilinear: pulls a gradient at the output resolution
/// back to the input resolution.
Image resize_bilinear_vjp(int in_h, int in_w, const Image& grad_out);

// PNG I/O (8-bit RGB). 16-bit variants store signed offsets in [-1,1]
// mapped onto the full u16 range; used to persist perturbations losslessly
// enough to reconstruct adversarial images.
void write_png(const std::string& path, const Image8& img);
Image8 read_png(const std::string& path);
void write_png16_offset(const std::string& path, const Image& offsets);
Image read_png16_offset(const std::string& path);

}  // namespace respoof
