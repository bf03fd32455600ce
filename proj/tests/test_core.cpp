#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "respoof/image.hpp"
#include "respoof/rng.hpp"

using namespace respoof;

TEST_CASE("rng: identical seeds give identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng: substreams are disjoint from the parent and each other") {
  Rng root(7);
  Rng a = root.substream("alpha");
  Rng b = root.substream("beta");
  Rng a2 = Rng(7).substream("alpha");
  CHECK(a.next_u64() == a2.next_u64());
  // different labels should (overwhelmingly) disagree immediately
  CHECK(Rng(7).substream("alpha").next_u64() != Rng(7).substream("beta").next_u64());
  (void)b;
}

TEST_CASE("rng: uniform stays in range and covers it") {
  Rng r(3);
  double lo = 1e9, hi = -1e9;
  for (int i = 0; i < 20000; ++i) {
    const double v = r.uniform(-2.0, 3.0);
    CHECK(v >= -2.0);
    CHECK(v <= 3.0);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo < -1.9);
  CHECK(hi > 2.9);
  CHECK(r.uniform(5.0, 5.0) == 5.0);
}

TEST_CASE("rng: uniform_int is unbiased enough and inclusive") {
  Rng r(11);
  std::array<int, 6> counts{};
  for (int i = 0; i < 60000; ++i) counts[static_cast<size_t>(r.uniform_int(0, 5))]++;
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("rng: normal moments") {
  Rng r(5);
  double s = 0, s2 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    s += v;
    s2 += v * v;
  }
  CHECK(std::abs(s / n) < 0.02);
  CHECK(std::abs(s2 / n - 1.0) < 0.03);
}

TEST_CASE("rng: permutation is a permutation") {
  Rng r(9);
  auto p = r.permutation(6);
  std::array<bool, 6> seen{};
  for (int v : p) seen[static_cast<size_t>(v)] = true;
  for (bool b : seen) CHECK(b);
}

TEST_CASE("image: quantize/dequantize round trip on 8-bit lattice") {
  Image img(4, 5);
  Rng r(1);
  for (auto& v : img.data) v = r.uniform_int(0, 255) / 255.0;
  const Image back = dequantize(quantize(img));
  CHECK(max_abs_diff(img, back) < 1e-12);
}

TEST_CASE("image: crop rejects out-of-bounds boxes") {
  Image img(8, 8);
  CHECK_THROWS(crop(img, 4, 4, 8, 2));
  CHECK_THROWS(crop(img, -1, 0, 2, 2));
  CHECK_NOTHROW(crop(img, 0, 0, 8, 8));
}

TEST_CASE("image: same-size bilinear resize is exact") {
  Image img(7, 9);
  Rng r(2);
  for (auto& v : img.data) v = r.uniform();
  const Image out = resize_bilinear(img, 7, 9);
  CHECK(max_abs_diff(img, out) == 0.0);
}

TEST_CASE("image: resize adjoint matches forward (dot-product test)") {
  // <A x, y> == <x, A^T y> for random x, y
  Rng r(4);
  Image x(10, 12);
  for (auto& v : x.data) v = r.uniform();
  Image y(6, 7);
  for (auto& v : y.data) v = r.uniform(-1.0, 1.0);
  const Image ax = resize_bilinear(x, 6, 7);
  const Image aty = resize_bilinear_vjp(10, 12, y);
  double lhs = 0, rhs = 0;
  for (size_t i = 0; i < ax.data.size(); ++i) lhs += ax.data[i] * y.data[i];
  for (size_t i = 0; i < x.data.size(); ++i) rhs += x.data[i] * aty.data[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("png: 8-bit round trip is bitwise") {
  Image8 img(9, 11);
  Rng r(6);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(r.uniform_int(0, 255));
  const std::string path = std::filesystem::temp_directory_path() / "respoof_t8.png";
  write_png(path, img);
  const Image8 back = read_png(path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  CHECK(back.data == img.data);
  std::filesystem::remove(path);
}

TEST_CASE("png: 16-bit offset round trip is within one quantization step") {
  Image img(5, 6);
  Rng r(8);
  for (auto& v : img.data) v = r.uniform(-0.5, 0.5);
  const std::string path = std::filesystem::temp_directory_path() / "respoof_t16.png";
  write_png16_offset(path, img);
  const Image back = read_png16_offset(path);
  CHECK(max_abs_diff(img, back) <= 2.0 / 65535.0);
  std::filesystem::remove(path);
}
