#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "respoof/authsys.hpp"
#include "respoof/compositor.hpp"
#include "respoof/errors.hpp"
#include "testutil.hpp"

using namespace respoof;

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0;
  for (size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot;  // embeddings are unit-norm
}

}  // namespace

// --- corpus -----------------------------------------------------------------

TEST_CASE("generate_corpus: 9 identities x 20 samples gives 180 samples") {
  Rng rng(1);
  const Corpus c = generate_corpus(9, 20, rng, ChannelSpec());
  CHECK(c.samples.size() == 180);
  std::set<std::string> ids;
  for (const auto& s : c.samples) ids.insert(s.identity);
  CHECK(ids.size() == 9);
}

TEST_CASE("generate_corpus: same seed reproduces the corpus bit-exactly") {
  CorpusParams p;
  p.train_identities = 2;
  p.val_identities = 1;
  p.test_identities = 1;
  p.per_train_identity = 3;
  p.per_test_identity = 2;
  const Corpus a = generate_corpus(p, Rng(77), ChannelSpec());
  const Corpus b = generate_corpus(p, Rng(77), ChannelSpec());
  REQUIRE(a.samples.size() == b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].id == b.samples[i].id);
    CHECK(a.samples[i].scene.data == b.samples[i].scene.data);
    CHECK(a.samples[i].spoofed.data == b.samples[i].spoofed.data);
    CHECK(a.samples[i].box == b.samples[i].box);
  }
}

TEST_CASE("generate_corpus: boxes valid, splits identity-disjoint, crops consistent") {
  const auto& m = testutil::mini_system();
  std::map<Split, std::set<std::string>> by_split;
  for (const auto& s : m.corpus.samples) {
    CHECK(s.box.inside(s.scene.width, s.scene.height));
    by_split[s.split].insert(s.identity);
    // scene[box] == original bit-exactly
    for (int y = 0; y < s.box.h; ++y)
      for (int x = 0; x < s.box.w; ++x)
        for (int c = 0; c < 3; ++c) {
          const size_t si =
              (static_cast<size_t>(s.box.y + y) * s.scene.width + (s.box.x + x)) * 3 +
              static_cast<size_t>(c);
          const size_t oi = (static_cast<size_t>(y) * s.box.w + x) * 3 + static_cast<size_t>(c);
          CHECK(s.scene.data[si] == s.original.data[oi]);
        }
  }
  for (const auto& [sa, ids_a] : by_split)
    for (const auto& [sb, ids_b] : by_split) {
      if (sa == sb) continue;
      for (const auto& id : ids_a) CHECK(ids_b.count(id) == 0);
    }
}

TEST_CASE("corpus: save/load round trip") {
  CorpusParams p;
  p.train_identities = 1;
  p.val_identities = 1;
  p.test_identities = 1;
  p.per_train_identity = 2;
  p.per_test_identity = 2;
  const Corpus a = generate_corpus(p, Rng(5), ChannelSpec());
  const std::string dir =
      (std::filesystem::temp_directory_path() / "respoof_corpus_rt").string();
  std::filesystem::remove_all(dir);
  save_corpus(dir, a);
  const Corpus b = load_corpus(dir);
  REQUIRE(a.samples.size() == b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].scene.data == b.samples[i].scene.data);
    CHECK(a.samples[i].original.data == b.samples[i].original.data);
    CHECK(a.samples[i].spoofed.data == b.samples[i].spoofed.data);
    CHECK(a.samples[i].split == b.samples[i].split);
  }
  std::filesystem::remove_all(dir);
}

// --- recognition -------------------------------------------------------------

TEST_CASE("recognize: single-identity gallery always answers that identity") {
  Gallery g;
  g.k = 3;
  g.embeddings["alice"] = {{1.0, 0.0}, {0.8, 0.6}};
  CHECK(recognize({0.0, -1.0}, g) == "alice");
}

TEST_CASE("recognize: exact match with k = 1") {
  Gallery g;
  g.k = 1;
  g.embeddings["a"] = {{1.0, 0.0}};
  g.embeddings["b"] = {{0.0, 1.0}};
  CHECK(recognize({1.0, 0.0}, g) == "a");
  CHECK(recognize({0.0, 1.0}, g) == "b");
}

TEST_CASE("recognize: matches a brute-force k-NN oracle on random probes") {
  Rng rng(9);
  Gallery g;
  g.k = 3;
  struct Entry {
    std::string id;
    std::vector<double> v;
  };
  std::vector<Entry> all;
  for (const std::string id : {"ida", "idb", "idc"}) {
    for (int i = 0; i < 5; ++i) {
      std::vector<double> v{rng.uniform(-1, 1), rng.uniform(-1, 1)};
      g.embeddings[id].push_back(v);
      all.push_back({id, v});
    }
  }
  for (int probe = 0; probe < 100; ++probe) {
    const std::vector<double> q{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    // oracle: full sort by distance, majority of top 3, ties by summed
    // distance then label
    std::vector<std::pair<double, std::string>> d;
    for (const auto& e : all) {
      const double dx = e.v[0] - q[0], dy = e.v[1] - q[1];
      d.push_back({std::sqrt(dx * dx + dy * dy), e.id});
    }
    std::sort(d.begin(), d.end());
    std::map<std::string, std::pair<int, double>> votes;
    for (int i = 0; i < 3; ++i) {
      votes[d[static_cast<size_t>(i)].second].first++;
      votes[d[static_cast<size_t>(i)].second].second += d[static_cast<size_t>(i)].first;
    }
    std::string expect;
    int bc = -1;
    double bs = 1e18;
    for (const auto& [id, cv] : votes) {
      if (cv.first > bc || (cv.first == bc && cv.second < bs)) {
        expect = id;
        bc = cv.first;
        bs = cv.second;
      }
    }
    CHECK(recognize(q, g) == expect);
  }
}

TEST_CASE("gallery validation") {
  Gallery g;
  g.k = 2;  // even
  g.embeddings["a"] = {{1.0, 0.0}};
  CHECK_THROWS_AS(g.validate(), RejectedInput);
  g.k = 3;
  g.embeddings["b"] = {{1.0, 0.0, 0.0}};  // dimension mismatch
  CHECK_THROWS_AS(g.validate(), RejectedInput);
}

// --- embeddings ----------------------------------------------------------------

TEST_CASE("embed_face: deterministic, unit norm, rejects bad boxes") {
  const auto& m = testutil::mini_system();
  const auto& s = m.corpus.samples.front();
  const Image scene = dequantize(s.scene);
  const auto e1 = embed_face(scene, s.box, m.sys.embedder);
  const auto e2 = embed_face(scene, s.box, m.sys.embedder);
  CHECK(e1 == e2);
  double n2 = 0;
  for (double v : e1) n2 += v * v;
  CHECK(std::abs(std::sqrt(n2) - 1.0) <= 1e-6);
  CHECK_THROWS_AS(embed_face(scene, FaceBox{-1, 0, 10, 10}, m.sys.embedder), RejectedInput);
  CHECK_THROWS_AS(
      embed_face(scene, FaceBox{scene.width - 5, 0, 10, 10}, m.sys.embedder), RejectedInput);
}

TEST_CASE("embeddings separate unseen identities better than chance") {
  const auto& m = testutil::mini_system();
  std::map<std::string, std::vector<std::vector<double>>> by_id;
  for (int i : m.corpus.indices(Split::kTest)) {
    const auto& s = m.corpus.samples[static_cast<size_t>(i)];
    by_id[s.identity].push_back(embed_face(dequantize(s.scene), s.box, m.sys.embedder));
  }
  double within = 0, cross = 0;
  int wn = 0, cn = 0;
  for (const auto& [ida, va] : by_id) {
    for (const auto& [idb, vb] : by_id) {
      for (size_t i = 0; i < va.size(); ++i)
        for (size_t j = 0; j < vb.size(); ++j) {
          if (ida == idb && i < j) {
            within += cosine(va[i], vb[j]);
            ++wn;
          } else if (ida < idb) {
            cross += cosine(va[i], vb[j]);
            ++cn;
          }
        }
    }
  }
  within /= wn;
  cross /= cn;
  MESSAGE("within-identity cos ", within, " vs cross-identity cos ", cross);
  CHECK(within > cross);
}

// --- spoof detector ---------------------------------------------------------------

TEST_CASE("detect_spoof: label always equals argmax of the soft output") {
  const auto& m = testutil::mini_system();
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    Image img(40, 40);
    for (auto& v : img.data) v = rng.uniform();
    const auto [soft, label] = detect_spoof(img, m.sys.spoof_detector);
    CHECK(label == (soft[1] > soft[0] ? 1 : 0));
    CHECK(soft[0] + soft[1] == doctest::Approx(1.0));
    CHECK(std::isfinite(soft[0]));
  }
}

TEST_CASE("train_spoof_detector: rejects empty sets") {
  CHECK_THROWS_AS(train_spoof_detector({}, {Image8(8, 8)}, 1, 1e-4, Rng(1)), RejectedInput);
  CHECK_THROWS_AS(train_spoof_detector({Image8(8, 8)}, {}, 1, 1e-4, Rng(1)), RejectedInput);
}

TEST_CASE("train_spoof_detector: zero epochs behaves like chance on balanced data") {
  const auto& m = testutil::mini_system();
  Rng rng(12);
  const LabeledCrops eval = build_spoof_eval_crops(m.corpus, Split::kTrain, m.channel,
                                                   rng.substream("eval"));
  SpoofTrainOptions opts;
  opts.input_side = 32;
  opts.conv_channels = {4, 8};
  const SpoofDetector det = train_spoof_detector(eval.real, eval.spoof, 0, 1e-4,
                                                 rng.substream("train"), opts);
  const double acc = spoof_accuracy(det, eval);
  CHECK(acc >= 0.4);
  CHECK(acc <= 0.6);
}

TEST_CASE("train_spoof_detector: same seed gives identical weights") {
  const auto& m = testutil::mini_system();
  Rng crop_rng(44);
  const LabeledCrops crops = build_spoof_training_crops(m.corpus, Split::kVal, m.channel,
                                                        crop_rng, false);
  SpoofTrainOptions opts;
  opts.input_side = 32;
  opts.conv_channels = {4, 8};
  const SpoofDetector a = train_spoof_detector(crops.real, crops.spoof, 2, 1e-4, Rng(5), opts);
  const SpoofDetector b = train_spoof_detector(crops.real, crops.spoof, 2, 1e-4, Rng(5), opts);
  CHECK(a.net.params() == b.net.params());
}

TEST_CASE("trained mini spoof detector separates real from rebroadcast") {
  const auto& m = testutil::mini_system();
  Rng rng(23);
  const LabeledCrops held_out =
      build_spoof_eval_crops(m.corpus, Split::kTest, m.channel, rng);
  const double acc = spoof_accuracy(m.sys.spoof_detector, held_out);
  MESSAGE("mini spoof detector held-out accuracy ", acc);
  CHECK(acc >= 0.8);  // full-scale acceptance requires >= 0.9
}

// --- face detection / cascade -------------------------------------------------------

TEST_CASE("detect_face: finds synthetic faces at IoU >= 0.5 on most scenes") {
  const auto& m = testutil::mini_system();
  int hits = 0, total = 0;
  for (int i : m.corpus.indices(Split::kTest)) {
    const auto& s = m.corpus.samples[static_cast<size_t>(i)];
    const auto box = m.sys.face_detector.detect(dequantize(s.scene));
    ++total;
    if (box && box->iou(s.box) >= 0.5) ++hits;
  }
  MESSAGE("face detector IoU>=0.5 on ", hits, "/", total, " test scenes");
  CHECK(hits >= total * 8 / 10);
}

TEST_CASE("detect_face: uniform noise and blank images give no face") {
  const auto& m = testutil::mini_system();
  Rng rng(31);
  Image noise(128, 128);
  for (auto& v : noise.data) v = rng.uniform();
  CHECK_FALSE(m.sys.face_detector.detect(noise).has_value());
  const Image blank(128, 128, 0.5);
  CHECK_FALSE(m.sys.face_detector.detect(blank).has_value());
}

TEST_CASE("authenticate: genuine scenes pass, rebroadcast faces stop at spoof stage") {
  const auto& m = testutil::mini_system();
  int genuine_pass = 0, spoof_rejected_at_sd = 0, total = 0;
  for (int i : m.corpus.indices(Split::kTest)) {
    const auto& s = m.corpus.samples[static_cast<size_t>(i)];
    const Image scene = dequantize(s.scene);
    ++total;
    const AuthVerdict genuine = authenticate(m.sys, scene, s.identity);
    genuine.validate(s.identity);
    if (genuine.rejection_stage == RejectionStage::kNone) ++genuine_pass;

    // the forged spoof image shown back to the system
    const Image spoof_scene = embed_face(
        scene, s.box, resize_bilinear(dequantize(s.spoofed), s.box.h, s.box.w),
        CompositeMode::paste());
    const AuthVerdict spoofv = authenticate(m.sys, spoof_scene, s.identity);
    spoofv.validate(s.identity);
    if (spoofv.rejection_stage == RejectionStage::kSpoofingDetection) ++spoof_rejected_at_sd;
  }
  MESSAGE("genuine pass ", genuine_pass, "/", total, "; spoof stopped at spoof stage ",
          spoof_rejected_at_sd, "/", total);
  CHECK(genuine_pass >= total * 7 / 10);
  CHECK(spoof_rejected_at_sd >= total * 7 / 10);
}

TEST_CASE("authenticate: cascade short-circuits after the rejection stage") {
  const auto& m = testutil::mini_system();
  // no-face input: only face detection runs
  AuthTrace trace;
  const Image blank(128, 128, 0.45);
  const AuthVerdict v = authenticate(m.sys, blank, "id05", &trace);
  v.validate("id05");
  CHECK(v.rejection_stage == RejectionStage::kFaceDetection);
  CHECK_FALSE(v.face_found);
  CHECK_FALSE(v.identity.has_value());
  CHECK_FALSE(v.spoof_label.has_value());
  CHECK(trace.face_detection_calls == 1);
  CHECK(trace.recognition_calls == 0);
  CHECK(trace.spoof_calls == 0);

  // wrong claimed identity: recognition rejects, spoof stage never runs
  const auto& s = m.corpus.samples[static_cast<size_t>(m.corpus.indices(Split::kTest)[0])];
  AuthTrace trace2;
  const AuthVerdict v2 =
      authenticate(m.sys, dequantize(s.scene), "definitely-not-" + s.identity, &trace2);
  CHECK(trace2.recognition_calls == 1);
  if (v2.rejection_stage == RejectionStage::kFaceRecognition) {
    CHECK(trace2.spoof_calls == 0);
  }
}

TEST_CASE("recognition accuracy on the mini corpus is usable") {
  const auto& m = testutil::mini_system();
  const double acc = recognition_accuracy(m.corpus, Split::kTest, m.sys);
  MESSAGE("mini recognition accuracy ", acc);
  CHECK(acc >= 0.7);  // full scale targets >= 0.95
}
