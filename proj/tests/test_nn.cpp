#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "respoof/nn.hpp"

using namespace respoof;
using nn::ConvNet;
using nn::ConvNetSpec;
using nn::Tensor;

namespace {

ConvNet tiny_net(Rng& rng, int side = 8) {
  ConvNetSpec spec;
  spec.input_side = side;
  spec.conv_channels = {4, 6};
  spec.fc_dims = {5, 3};
  return ConvNet(spec, rng);
}

Tensor random_tensor(int c, int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor t(c, h, w);
  for (auto& v : t.v) v = rng.uniform(lo, hi);
  return t;
}

double loss_of(const ConvNet& net, const Tensor& x, int target) {
  return nn::softmax_ce(net.forward(x), target, nullptr);
}

}  // namespace

TEST_CASE("convnet: parameter gradients match finite differences") {
  Rng rng(1);
  ConvNet net = tiny_net(rng);
  const Tensor x = random_tensor(3, 8, 8, rng);
  const int target = 1;

  ConvNet::Trace tr;
  const auto logits = net.forward(x, &tr);
  std::vector<double> dl;
  nn::softmax_ce(logits, target, &dl);
  std::vector<double> gparams(net.param_count(), 0.0);
  net.backward(tr, dl, &gparams, false);

  Rng pick(2);
  const double step = 1e-6;
  for (int probe = 0; probe < 60; ++probe) {
    const size_t i =
        static_cast<size_t>(pick.uniform_int(0, static_cast<int>(net.param_count()) - 1));
    ConvNet plus = net, minus = net;
    plus.params()[i] += step;
    minus.params()[i] -= step;
    const double fd = (loss_of(plus, x, target) - loss_of(minus, x, target)) / (2 * step);
    const double denom = std::max({std::abs(fd), std::abs(gparams[i]), 1e-6});
    CHECK(std::abs(fd - gparams[i]) / denom < 1e-3);
  }
}

TEST_CASE("convnet: input gradient matches finite differences") {
  Rng rng(3);
  ConvNet net = tiny_net(rng);
  // keep activations away from relu/pool tie points
  const Tensor x = random_tensor(3, 8, 8, rng, 0.1, 0.9);
  const int target = 0;

  ConvNet::Trace tr;
  const auto logits = net.forward(x, &tr);
  std::vector<double> dl;
  nn::softmax_ce(logits, target, &dl);
  const Tensor dx = net.backward(tr, dl, nullptr, true);

  Rng pick(4);
  const double step = 1e-6;
  for (int probe = 0; probe < 60; ++probe) {
    const size_t i = static_cast<size_t>(pick.uniform_int(0, static_cast<int>(x.v.size()) - 1));
    Tensor plus = x, minus = x;
    plus.v[i] += step;
    minus.v[i] -= step;
    const double fd = (loss_of(net, plus, target) - loss_of(net, minus, target)) / (2 * step);
    const double denom = std::max({std::abs(fd), std::abs(dx.v[i]), 1e-6});
    CHECK(std::abs(fd - dx.v[i]) / denom < 1e-3);
  }
}

TEST_CASE("adam: matches a hand-computed reference step") {
  // one parameter, two steps, standard constants
  std::vector<double> p{1.0};
  nn::Adam adam(1, 0.1);
  adam.step(p, {0.5});
  // t=1: m=0.05, v=0.00025; mhat=0.5, vhat=0.25; p -= 0.1*0.5/(0.5+1e-8)
  CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  const double p1 = p[0];
  adam.step(p, {-0.5});
  // t=2: m = 0.9*0.05 - 0.1*0.5 = -0.005; mhat = -0.005/(1-0.81) = -0.0263157...
  // v = 0.999*0.00025 + 0.001*0.25 = 0.00049975; vhat = v/(1-0.999^2)
  const double mhat = -0.005 / (1 - 0.9 * 0.9);
  const double vhat = (0.999 * 0.00025 + 0.001 * 0.25) / (1 - 0.999 * 0.999);
  CHECK(p[0] == doctest::Approx(p1 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-10));
}

TEST_CASE("adam: drives a quadratic to its minimum") {
  std::vector<double> p{4.0, -3.0};
  nn::Adam adam(2, 0.05);
  for (int i = 0; i < 2000; ++i) {
    adam.step(p, {2 * (p[0] - 1.0), 2 * (p[1] + 2.0)});
  }
  CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(p[1] == doctest::Approx(-2.0).epsilon(1e-3));
}

TEST_CASE("convnet: save/load round trip is bitwise") {
  Rng rng(7);
  ConvNet a = tiny_net(rng);
  ConvNetSpec spec2;
  spec2.input_side = 16;
  spec2.conv_channels = {3};
  spec2.fc_dims = {2};
  ConvNet b(spec2, rng);
  const std::string path = std::filesystem::temp_directory_path() / "respoof_models.bin";
  nn::save_models(path, {{"a", a}, {"b", b}});
  auto loaded = nn::load_models(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded.at("a").spec() == a.spec());
  CHECK(loaded.at("a").params() == a.params());
  CHECK(loaded.at("b").spec() == b.spec());
  CHECK(loaded.at("b").params() == b.params());
  std::filesystem::remove(path);
}

TEST_CASE("convnet: learns a trivial color rule") {
  // red-dominant vs blue-dominant 8x8 patches
  Rng rng(11);
  ConvNetSpec spec;
  spec.input_side = 8;
  spec.conv_channels = {4};
  spec.fc_dims = {2};
  ConvNet net(spec, rng);

  auto make = [&](int label, Rng& r) {
    Tensor t = random_tensor(3, 8, 8, r, 0.0, 0.4);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) t.at(label == 0 ? 0 : 2, y, x) += 0.5;
    return t;
  };

  nn::Adam adam(net.param_count(), 0.01);
  std::vector<double> grads(net.param_count());
  for (int step = 0; step < 60; ++step) {
    std::fill(grads.begin(), grads.end(), 0.0);
    for (int b = 0; b < 8; ++b) {
      const int label = b % 2;
      const Tensor x = make(label, rng);
      ConvNet::Trace tr;
      const auto logits = net.forward(x, &tr);
      std::vector<double> dl;
      nn::softmax_ce(logits, label, &dl);
      for (auto& d : dl) d /= 8.0;
      net.backward(tr, dl, &grads, false);
    }
    adam.step(net.params(), grads);
  }
  int correct = 0;
  Rng eval_rng(12);
  for (int i = 0; i < 50; ++i) {
    const int label = i % 2;
    if (nn::argmax(net.forward(make(label, eval_rng))) == label) ++correct;
  }
  CHECK(correct >= 45);
}

TEST_CASE("tensor/image conversion round trip") {
  Rng rng(13);
  Image img(6, 7);
  for (auto& v : img.data) v = rng.uniform();
  const Image back = nn::tensor_to_image(nn::image_to_tensor(img));
  CHECK(max_abs_diff(img, back) == 0.0);
}
