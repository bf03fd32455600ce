#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "respoof/attacks.hpp"
#include "respoof/authsys.hpp"
#include "respoof/errors.hpp"
#include "respoof/nn.hpp"

using namespace respoof;

namespace {

/// 2-way linear score on the first channel of the first pixel:
/// logits = (w0 * x, w1 * x). Flip distances have closed forms.
class LinearScorer : public SpoofScorer {
 public:
  LinearScorer(double w0, double w1) : w0_(w0), w1_(w1) {}

  std::array<double, 2> logits(const Image& crop) const override {
    const double x = crop.at(0, 0, 0);
    return {w0_ * x, w1_ * x};
  }
  double ce_toward(const Image& crop, int target, std::array<double, 2>* logits_out,
                   Image* grad) const override {
    const auto l = logits(crop);
    if (logits_out) *logits_out = l;
    std::vector<double> lv{l[0], l[1]};
    std::vector<double> dl;
    const double loss = nn::softmax_ce(lv, target, grad ? &dl : nullptr);
    if (grad) {
      *grad = Image(crop.height, crop.width);
      grad->at(0, 0, 0) = dl[0] * w0_ + dl[1] * w1_;
    }
    return loss;
  }

 private:
  double w0_, w1_;
};

/// Constant spoof verdict with zero gradient everywhere.
class ConstantSpoofScorer : public SpoofScorer {
 public:
  std::array<double, 2> logits(const Image&) const override { return {0.0, 1.0}; }
  double ce_toward(const Image& crop, int target, std::array<double, 2>* logits_out,
                   Image* grad) const override {
    if (logits_out) *logits_out = logits(crop);
    std::vector<double> lv{0.0, 1.0};
    const double loss = nn::softmax_ce(lv, target, nullptr);
    if (grad) *grad = Image(crop.height, crop.width);
    return loss;
  }
};

Image one_pixel(double v) {
  Image img(1, 1);
  img.at(0, 0, 0) = v;
  img.at(0, 0, 1) = v;
  img.at(0, 0, 2) = v;
  return img;
}

Image random_image(int h, int w, Rng& rng, double lo, double hi) {
  Image img(h, w);
  for (auto& v : img.data) v = rng.uniform(lo, hi);
  return img;
}

SpoofDetector random_detector(int side, Rng& rng) {
  nn::ConvNetSpec spec;
  spec.input_side = side;
  spec.conv_channels = {4, 8};
  spec.fc_dims = {2};
  SpoofDetector det;
  det.net = nn::ConvNet(spec, rng);
  return det;
}

}  // namespace

TEST_CASE("psnr: sentinel, closed form, symmetry") {
  Rng rng(1);
  const Image x = random_image(8, 8, rng, 0.0, 1.0);
  CHECK(psnr(x, x) == std::numeric_limits<double>::infinity());

  const Image a(6, 6, 0.25);
  const Image b(6, 6, 0.75);
  CHECK(psnr(a, b) == doctest::Approx(6.0206).epsilon(1e-4));  // 10*log10(1/0.25)

  const Image y = random_image(8, 8, rng, 0.0, 1.0);
  CHECK(psnr(x, y) == doctest::Approx(psnr(y, x)).epsilon(1e-12));

  const Image z(4, 4);
  CHECK_THROWS(psnr(x, z));
}

TEST_CASE("epsilon schedule: sweep notation and single values") {
  const auto sweep = parse_epsilon_schedule("[0.1:1.1,1000]");
  REQUIRE(sweep.size() == 1000);
  CHECK(sweep.front() == doctest::Approx(0.1));
  CHECK(sweep.back() == doctest::Approx(1.1));
  for (size_t i = 1; i < sweep.size(); ++i)
    CHECK(sweep[i] - sweep[i - 1] == doctest::Approx(1.0 / 999.0).epsilon(1e-9));

  const auto single = parse_epsilon_schedule("0.3");
  REQUIRE(single.size() == 1);
  CHECK(single[0] == 0.3);

  const auto small = parse_epsilon_schedule(" [0.05:0.5,100] ");
  REQUIRE(small.size() == 100);
  CHECK(small.front() == doctest::Approx(0.05));
  CHECK(small.back() == doctest::Approx(0.5));

  CHECK_THROWS(parse_epsilon_schedule("[0.1:1.1]"));
  CHECK_THROWS(parse_epsilon_schedule(""));
}

TEST_CASE("attack_digital: zero-gradient detector yields rho = 0 and failure") {
  const ConstantSpoofScorer scorer;
  const Image face = one_pixel(0.5);
  for (AttackMethod m : {AttackMethod::kFgsm, AttackMethod::kGa, AttackMethod::kBim,
                         AttackMethod::kIga}) {
    AttackConfig cfg;
    cfg.method = m;
    cfg.epsilons = {0.1, 0.3};
    const AttackResult r = attack_digital(face, scorer, cfg);
    CHECK_FALSE(r.digital_success);
    CHECK(max_abs_diff(r.rho, Image(1, 1)) == 0.0);
    CHECK_FALSE(r.aborted);
  }
}

TEST_CASE("attack_digital: FGSM sweep finds the closed-form flip distance") {
  // logits (0, 5x): spoof for x > 0, flips exactly when x reaches 0.
  const LinearScorer scorer(0.0, 5.0);
  const double x0 = 0.37;
  const Image face = one_pixel(x0);
  REQUIRE(scorer.predict(face) == 1);

  AttackConfig cfg;
  cfg.method = AttackMethod::kFgsm;
  cfg.epsilons = parse_epsilon_schedule("[0.01:1.0,100]");
  cfg.psnr_floor_db = 0.0;  // closed-form check without a budget
  const AttackResult r = attack_digital(face, scorer, cfg);
  CHECK(r.digital_success);
  // smallest swept epsilon >= x0: values are 0.01*k, so 0.37 exactly
  CHECK(r.epsilon_used == doctest::Approx(0.37).epsilon(1e-9));
  CHECK(r.adversarial.at(0, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));

  // monotone sweep: reported epsilon is the smallest successful one
  AttackConfig coarse = cfg;
  coarse.epsilons = {0.9, 0.5, 0.2, 0.384};  // unsorted on purpose
  const AttackResult r2 = attack_digital(face, scorer, coarse);
  CHECK(r2.digital_success);
  CHECK(r2.epsilon_used == doctest::Approx(0.384));
}

TEST_CASE("attack_digital: GA uses the raw gradient direction") {
  const LinearScorer scorer(0.0, 5.0);
  const Image face = one_pixel(0.2);
  AttackConfig cfg;
  cfg.method = AttackMethod::kGa;
  cfg.epsilons = parse_epsilon_schedule("[0.05:1.0,20]");
  cfg.psnr_floor_db = 0.0;
  const AttackResult r = attack_digital(face, scorer, cfg);
  CHECK(r.digital_success);
  CHECK(r.epsilon_used == doctest::Approx(0.2).epsilon(0.26));  // first eps >= 0.2
  // other channels have zero gradient and must stay untouched
  CHECK(r.adversarial.at(0, 0, 1) == 0.2);
  CHECK(r.adversarial.at(0, 0, 2) == 0.2);
}

TEST_CASE("attack_digital: BIM respects the L-inf ball at every iterate") {
  Rng rng(5);
  const SpoofDetector det = random_detector(16, rng);
  const CnnSpoofScorer scorer(det);
  const Image face = random_image(16, 16, rng, 0.2, 0.8);
  AttackConfig cfg;
  cfg.method = AttackMethod::kBim;
  cfg.epsilons = {0.05};
  cfg.iterations = 12;
  cfg.psnr_floor_db = 0.0;
  const AttackResult r = attack_digital(face, scorer, cfg);
  CHECK(r.max_rho_linf <= 0.05 + 1e-6);
  double linf = 0;
  for (double v : r.rho.data) linf = std::max(linf, std::abs(v));
  CHECK(linf <= 0.05 + 1e-6);
  // adversarial image is valid and consistent with rho
  for (size_t i = 0; i < face.data.size(); ++i) {
    CHECK(r.adversarial.data[i] >= 0.0);
    CHECK(r.adversarial.data[i] <= 1.0);
    CHECK(r.adversarial.data[i] - face.data[i] == doctest::Approx(r.rho.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("attack_digital: PSNR floor stops the sweep") {
  // flip needs x to move by 0.9; with MAX=1 images a 1-pixel change of 0.9
  // on a 4x4x3 image gives PSNR = 10*log10(48/0.81) ~= 17.7 dB < 20
  const LinearScorer scorer(0.0, 5.0);
  Image face(4, 4, 0.5);
  face.at(0, 0, 0) = 0.9;
  AttackConfig cfg;
  cfg.method = AttackMethod::kFgsm;
  cfg.epsilons = parse_epsilon_schedule("[0.85:1.0,10]");
  cfg.psnr_floor_db = 20.0;
  const AttackResult r = attack_digital(face, scorer, cfg);
  CHECK_FALSE(r.digital_success);
  CHECK(r.stopped_by_psnr);
  CHECK(r.psnr_db >= 20.0);
}

TEST_CASE("attack_eot: identity channel with lambda 0 reduces to a digital attack") {
  const LinearScorer scorer(0.0, 5.0);
  const Image face = one_pixel(0.3);
  AttackConfig cfg;
  cfg.method = AttackMethod::kEot;
  cfg.eot_samples_per_step = 5;
  cfg.eot_total_budget = 2000;  // 400 Adam iterations
  cfg.lambda = 0.0;
  cfg.psnr_floor_db = 10.0;  // a 1-pixel flip at distance 0.3 sits at ~15 dB
  const AttackResult r =
      attack_eot(face, scorer, ChannelSpec::identity(), cfg, Rng(42));
  CHECK(r.digital_success);
  CHECK(r.adversarial.at(0, 0, 0) < 0.05);
}

TEST_CASE("attack_eot: already-real input returns a near-zero perturbation") {
  const LinearScorer scorer(5.0, 0.0);  // confidently real for x > 0
  const Image face = one_pixel(0.6);
  AttackConfig cfg;
  cfg.method = AttackMethod::kEot;
  cfg.eot_samples_per_step = 10;
  cfg.eot_total_budget = 100;
  const AttackResult r = attack_eot(face, scorer, ChannelSpec(), cfg, Rng(7));
  CHECK(r.digital_success);
  double linf = 0;
  for (double v : r.rho.data) linf = std::max(linf, std::abs(v));
  CHECK(linf <= cfg.eot_learning_rate);
  CHECK(r.psnr_db >= 40.0);
}

TEST_CASE("attack_eot: fixed seed gives identical results") {
  Rng rng(11);
  const SpoofDetector det = random_detector(16, rng);
  const CnnSpoofScorer scorer(det);
  const Image face = random_image(16, 16, rng, 0.2, 0.8);
  AttackConfig cfg;
  cfg.method = AttackMethod::kEot;
  cfg.eot_samples_per_step = 4;
  cfg.eot_total_budget = 40;
  const AttackResult a = attack_eot(face, scorer, ChannelSpec(), cfg, Rng(99));
  const AttackResult b = attack_eot(face, scorer, ChannelSpec(), cfg, Rng(99));
  CHECK(a.adversarial.data == b.adversarial.data);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.psnr_db == b.psnr_db);
  CHECK(a.digital_success == b.digital_success);
}

TEST_CASE("attack_eot: never returns PSNR below the floor") {
  // strong spoof verdict that stays spoof: minimization keeps growing rho
  // until the stop condition rescales it onto the floor
  const LinearScorer scorer(0.0, 80.0);
  Image face(8, 8, 0.6);
  AttackConfig cfg;
  cfg.method = AttackMethod::kEot;
  cfg.eot_samples_per_step = 4;
  cfg.eot_total_budget = 4000;
  cfg.eot_learning_rate = 0.15;  // aggressive on purpose
  cfg.psnr_floor_db = 20.0;
  const AttackResult r = attack_eot(face, scorer, ChannelSpec::identity(), cfg, Rng(3));
  CHECK(r.psnr_db >= 20.0 - 0.01);
}

TEST_CASE("eot gradient estimator matches finite differences with frozen draws") {
  Rng rng(21);
  const SpoofDetector det = random_detector(16, rng);
  const CnnSpoofScorer scorer(det);
  ChannelSpec spec;

  for (int inst = 0; inst < 3; ++inst) {
    const Image face = random_image(20, 20, rng, 0.3, 0.7);
    Image rho(20, 20);
    for (auto& v : rho.data) v = rng.uniform(-0.02, 0.02);
    std::vector<TransformParams> draws;
    Rng drng(100 + inst);
    for (int i = 0; i < 4; ++i) draws.push_back(sample_transform(spec, drng));

    Image grad;
    eot_batch_loss(face, rho, scorer, draws, 0.1, 2, &grad);

    Rng pick(inst);
    for (int probe = 0; probe < 8; ++probe) {
      const size_t idx =
          static_cast<size_t>(pick.uniform_int(0, static_cast<int>(rho.data.size()) - 1));
      const double step = 1e-6;
      Image rp = rho, rm = rho;
      rp.data[idx] += step;
      rm.data[idx] -= step;
      const double lp = eot_batch_loss(face, rp, scorer, draws, 0.1, 2, nullptr);
      const double lm = eot_batch_loss(face, rm, scorer, draws, 0.1, 2, nullptr);
      const double fd = (lp - lm) / (2 * step);
      const double denom = std::max({std::abs(fd), std::abs(grad.data[idx]), 1e-5});
      CHECK(std::abs(fd - grad.data[idx]) / denom < 1e-3);
    }
  }
}

TEST_CASE("attack config validation") {
  AttackConfig cfg;
  cfg.epsilons = {0.0};
  CHECK_THROWS_AS(cfg.validate(), RejectedInput);
  cfg.epsilons = {0.1};
  cfg.eot_samples_per_step = 100;
  cfg.eot_total_budget = 50;
  CHECK_THROWS_AS(cfg.validate(), RejectedInput);
  AttackConfig ok;
  CHECK_NOTHROW(ok.validate());
  CHECK_THROWS_AS(attack_digital(one_pixel(0.5), ConstantSpoofScorer{},
                                 [] {
                                   AttackConfig c;
                                   c.method = AttackMethod::kEot;
                                   return c;
                                 }()),
                  RejectedInput);
}
