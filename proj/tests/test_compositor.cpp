#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "respoof/compositor.hpp"
#include "respoof/rng.hpp"

using namespace respoof;

namespace {

Image random_image(int h, int w, Rng& rng) {
  Image img(h, w);
  for (auto& v : img.data) v = rng.uniform();
  return img;
}

}  // namespace

TEST_CASE("embed_face: pasting the scene's own crop back is the identity") {
  Rng rng(1);
  const Image scene = random_image(40, 50, rng);
  const FaceBox box{12, 8, 20, 24};
  const Image face = crop(scene, box.x, box.y, box.w, box.h);
  const Image out = embed_face(scene, box, face, CompositeMode::paste());
  CHECK(max_abs_diff(scene, out) <= 1e-6);
}

TEST_CASE("embed_face: pixels outside the box are bitwise unchanged") {
  Rng rng(2);
  const Image scene = random_image(32, 32, rng);
  const FaceBox box{10, 6, 12, 14};
  const Image face = random_image(box.h, box.w, rng);

  const Image pasted = embed_face(scene, box, face, CompositeMode::paste());
  const double radius = 4.0;
  const Image feathered = embed_face(scene, box, face, CompositeMode::feathered(radius));
  const int reach = static_cast<int>(radius / 2.0 + 0.999);

  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      const bool in_box = x >= box.x && x < box.x + box.w && y >= box.y && y < box.y + box.h;
      const bool in_dilated = x >= box.x - reach && x < box.x + box.w + reach &&
                              y >= box.y - reach && y < box.y + box.h + reach;
      for (int c = 0; c < 3; ++c) {
        if (!in_box) CHECK(pasted.at(y, x, c) == scene.at(y, x, c));
        if (!in_dilated) CHECK(feathered.at(y, x, c) == scene.at(y, x, c));
      }
    }
  }
}

TEST_CASE("embed_face: feathered boundary pixel is the 50/50 blend") {
  const Image scene(30, 30, 0.0);
  const FaceBox box{8, 8, 14, 14};
  const Image face(box.h, box.w, 1.0);
  const double r = 6.0;
  const Image out = embed_face(scene, box, face, CompositeMode::feathered(r));

  // pixels on the box edge rows/columns sit exactly on the boundary
  for (int x = box.x; x < box.x + box.w; ++x) {
    CHECK(out.at(box.y, x, 0) == doctest::Approx(0.5));
    CHECK(out.at(box.y + box.h - 1, x, 1) == doctest::Approx(0.5));
  }
  // deep inside: pure face; far outside: pure scene
  CHECK(out.at(box.y + 7, box.x + 7, 0) == doctest::Approx(1.0));
  CHECK(out.at(0, 0, 0) == 0.0);
  // the ramp is linear in the signed distance
  CHECK(out.at(box.y + 1, box.x + 5, 2) == doctest::Approx(0.5 + 1.0 / r));
  CHECK(out.at(box.y - 1, box.x + 5, 2) == doctest::Approx(0.5 - 1.0 / r));
  // 8-bit export keeps the boundary within one quantization level of 50%
  const Image8 q = quantize(out);
  const int mid = q.data[(static_cast<size_t>(box.y) * out.width + box.x + 5) * 3];
  CHECK(std::abs(mid - 128) <= 1);
}

TEST_CASE("embed_face: paste is idempotent") {
  Rng rng(3);
  const Image scene = random_image(24, 24, rng);
  const FaceBox box{4, 5, 10, 9};
  const Image face = random_image(box.h, box.w, rng);
  const Image once = embed_face(scene, box, face, CompositeMode::paste());
  const Image twice = embed_face(once, box, face, CompositeMode::paste());
  CHECK(max_abs_diff(once, twice) == 0.0);
}

TEST_CASE("embed_face: invalid inputs are rejected") {
  Rng rng(4);
  const Image scene = random_image(20, 20, rng);
  const Image face = random_image(10, 10, rng);
  CHECK_THROWS_AS(embed_face(scene, FaceBox{15, 15, 10, 10}, face, CompositeMode::paste()),
                  RejectedInput);
  CHECK_THROWS_AS(embed_face(scene, FaceBox{0, 0, 12, 10}, face, CompositeMode::paste()),
                  RejectedInput);
  // feather radius must stay below half the box side
  CHECK_THROWS_AS(embed_face(scene, FaceBox{0, 0, 10, 10}, face, CompositeMode::feathered(5.0)),
                  RejectedInput);
}
