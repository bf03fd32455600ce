#include "respoof/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "respoof/errors.hpp"

namespace respoof {

Image8 quantize(const Image& img) {
  Image8 out(img.height, img.width);
  for (size_t i = 0; i < img.data.size(); ++i) {
    double v = std::clamp(img.data[i], 0.0, 1.0);
    out.data[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

Image dequantize(const Image8& img) {
  Image out(img.height, img.width);
  for (size_t i = 0; i < img.data.size(); ++i) {
    out.data[i] = img.data[i] / 255.0;
  }
  return out;
}

void clip01(Image& img) {
  for (auto& v : img.data) v = std::clamp(v, 0.0, 1.0);
}

double max_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw RejectedInput("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  }
  return m;
}

double mse(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw RejectedInput("mse: shape mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

Image crop(const Image& img, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > img.width || y + h > img.height)
    throw RejectedInput("crop: box outside image");
  Image out(h, w);
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx < w; ++xx)
      for (int c = 0; c < 3; ++c) out.at(yy, xx, c) = img.at(y + yy, x + xx, c);
  return out;
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw RejectedInput("resize: bad output size");
  Image out(out_h, out_w);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    const double wy = fy - y0;
    int y0c = std::clamp(y0, 0, img.height - 1);
    int y1c = std::clamp(y0 + 1, 0, img.height - 1);
    for (int x = 0; x < out_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      const double wx = fx - x0;
      int x0c = std::clamp(x0, 0, img.width - 1);
      int x1c = std::clamp(x0 + 1, 0, img.width - 1);
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(y0c, x0c, c) * (1 - wx) + img.at(y0c, x1c, c) * wx;
        const double bot = img.at(y1c, x0c, c) * (1 - wx) + img.at(y1c, x1c, c) * wx;
        out.at(y, x, c) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

Image resize_bilinear_vjp(int in_h, int in_w, const Image& grad_out) {
  Image grad_in(in_h, in_w);
  const double sy = static_cast<double>(in_h) / grad_out.height;
  const double sx = static_cast<double>(in_w) / grad_out.width;
  for (int y = 0; y < grad_out.height; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    const double wy = fy - y0;
    int y0c = std::clamp(y0, 0, in_h - 1);
    int y1c = std::clamp(y0 + 1, 0, in_h - 1);
    for (int x = 0; x < grad_out.width; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      const double wx = fx - x0;
      int x0c = std::clamp(x0, 0, in_w - 1);
      int x1c = std::clamp(x0 + 1, 0, in_w - 1);
      for (int c = 0; c < 3; ++c) {
        const double g = grad_out.at(y, x, c);
        grad_in.at(y0c, x0c, c) += g * (1 - wx) * (1 - wy);
        grad_in.at(y0c, x1c, c) += g * wx * (1 - wy);
        grad_in.at(y1c, x0c, c) += g * (1 - wx) * wy;
        grad_in.at(y1c, x1c, c) += g * wx * wy;
      }
    }
  }
  return grad_in;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png_impl(const std::string& path, int height, int width,
                    int bit_depth, const std::vector<std::uint8_t>& bytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng write failure: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, bit_depth, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const size_t row_bytes = static_cast<size_t>(width) * 3 * (bit_depth / 8);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<size_t>(y) * row_bytes));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void read_png_impl(const std::string& path, int expect_depth, int& height,
                   int& width, std::vector<std::uint8_t>& bytes) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw MissingArtifact("cannot open PNG: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng read failure: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != expect_depth || color != PNG_COLOR_TYPE_RGB) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("unexpected PNG format: " + path);
  }
  const size_t row_bytes = static_cast<size_t>(width) * 3 * (depth / 8);
  bytes.resize(row_bytes * height);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, bytes.data() + static_cast<size_t>(y) * row_bytes, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
}

}  // namespace

void write_png(const std::string& path, const Image8& img) {
  write_png_impl(path, img.height, img.width, 8, img.data);
}

Image8 read_png(const std::string& path) {
  Image8 out;
  read_png_impl(path, 8, out.height, out.width, out.data);
  return out;
}

void write_png16_offset(const std::string& path, const Image& offsets) {
  std::vector<std::uint8_t> bytes(offsets.data.size() * 2);
  for (size_t i = 0; i < offsets.data.size(); ++i) {
    const double v = std::clamp(offsets.data[i], -1.0, 1.0);
    const auto u = static_cast<std::uint16_t>(std::lround((v + 1.0) * 0.5 * 65535.0));
    bytes[2 * i] = static_cast<std::uint8_t>(u >> 8);  // PNG is big-endian
    bytes[2 * i + 1] = static_cast<std::uint8_t>(u & 0xff);
  }
  write_png_impl(path, offsets.height, offsets.width, 16, bytes);
}

Image read_png16_offset(const std::string& path) {
  int h = 0, w = 0;
  std::vector<std::uint8_t> bytes;
  read_png_impl(path, 16, h, w, bytes);
  Image out(h, w);
  for (size_t i = 0; i < out.data.size(); ++i) {
    const std::uint16_t u = static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
    out.data[i] = u / 65535.0 * 2.0 - 1.0;
  }
  return out;
}

}  // namespace respoof
