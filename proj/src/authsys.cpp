#include "respoof/authsys.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "respoof/errors.hpp"

namespace respoof {

// --- gallery / recognition -------------------------------------------------

int Gallery::dim() const {
  for (const auto& [id, vecs] : embeddings)
    if (!vecs.empty()) return static_cast<int>(vecs.front().size());
  return 0;
}

void Gallery::validate() const {
  if (k < 1 || k % 2 == 0) throw RejectedInput("gallery: k must be odd and >= 1");
  if (embeddings.empty()) throw RejectedInput("gallery: empty");
  const int d = dim();
  for (const auto& [id, vecs] : embeddings) {
    if (vecs.empty()) throw RejectedInput("gallery: identity with no embeddings: " + id);
    for (const auto& v : vecs)
      if (static_cast<int>(v.size()) != d) throw RejectedInput("gallery: dimension mismatch");
  }
}

std::string recognize(const std::vector<double>& embedding, const Gallery& gallery) {
  gallery.validate();
  if (static_cast<int>(embedding.size()) != gallery.dim())
    throw RejectedInput("recognize: embedding dimension mismatch");

  struct Hit {
    double dist;
    const std::string* identity;
  };
  std::vector<Hit> hits;
  for (const auto& [id, vecs] : gallery.embeddings) {
    for (const auto& v : vecs) {
      double d2 = 0;
      for (size_t i = 0; i < v.size(); ++i) {
        const double d = v[i] - embedding[i];
        d2 += d * d;
      }
      hits.push_back({d2, &id});
    }
  }
  const size_t k = std::min<size_t>(static_cast<size_t>(gallery.k), hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<long>(k), hits.end(),
                    [](const Hit& a, const Hit& b) {
                      if (a.dist != b.dist) return a.dist < b.dist;
                      return *a.identity < *b.identity;  // deterministic order
                    });
  // majority vote; ties by smaller summed distance, then label order
  std::map<std::string, std::pair<int, double>> votes;  // id -> (count, dist sum)
  for (size_t i = 0; i < k; ++i) {
    auto& v = votes[*hits[i].identity];
    v.first += 1;
    v.second += std::sqrt(hits[i].dist);
  }
  const std::string* best = nullptr;
  int best_count = -1;
  double best_sum = 0;
  for (const auto& [id, cv] : votes) {
    const auto [count, sum] = cv;
    if (count > best_count ||
        (count == best_count && (sum < best_sum || (sum == best_sum && id < *best)))) {
      best = &id;
      best_count = count;
      best_sum = sum;
    }
  }
  return *best;
}

// --- face detector ----------------------------------------------------------

double FaceDetector::score(const Image& scene, const FaceBox& box) const {
  const Image win = resize_bilinear(crop(scene, box.x, box.y, box.w, box.h),
                                    net.spec().input_side, net.spec().input_side);
  const auto logits = net.forward(nn::image_to_tensor(win));
  return nn::softmax(logits)[1];  // class 1 = face
}

std::optional<FaceBox> FaceDetector::detect(const Image& scene) const {
  const int short_side = std::min(scene.width, scene.height);
  double best_score = -1.0;
  FaceBox best{};
  auto consider = [&](int w, int x, int y) {
    const int h = static_cast<int>(std::lround(w * window_aspect));
    if (x < 0 || y < 0 || x + w > scene.width || y + h > scene.height) return;
    const FaceBox b{x, y, w, h};
    const double s = score(scene, b);
    if (s > best_score) {
      best_score = s;
      best = b;
    }
  };

  // coarse sweep
  for (double frac : {0.32, 0.40, 0.50, 0.62}) {
    const int w = std::max(8, static_cast<int>(std::lround(frac * short_side)));
    const int h = static_cast<int>(std::lround(w * window_aspect));
    const int stride = std::max(4, short_side / 16);
    for (int y = 0; y + h <= scene.height; y += stride)
      for (int x = 0; x + w <= scene.width; x += stride) consider(w, x, y);
  }
  if (best_score < 0) return std::nullopt;

  // refine position and scale around the best coarse hit
  for (int pass = 0; pass < 2; ++pass) {
    const FaceBox anchor = best;
    for (double sf : {0.85, 0.93, 1.0, 1.08, 1.16}) {
      const int w = std::max(8, static_cast<int>(std::lround(anchor.w * sf)));
      for (int dy = -4; dy <= 4; dy += 2)
        for (int dx = -4; dx <= 4; dx += 2)
          consider(w, anchor.x + dx + (anchor.w - w) / 2, anchor.y + dy +
                       (static_cast<int>(std::lround(anchor.w * window_aspect)) -
                        static_cast<int>(std::lround(w * window_aspect))) / 2);
    }
  }
  if (best_score < threshold) return std::nullopt;
  return best;
}

// --- embedder ----------------------------------------------------------------

std::vector<double> FaceEmbedder::embed(const Image& crop_img) const {
  const int side = net.spec().input_side;
  const Image in = resize_bilinear(crop_img, side, side);
  std::vector<double> e = net.feature(nn::image_to_tensor(in), 0);
  double n2 = 0;
  for (double v : e) n2 += v * v;
  const double n = std::sqrt(n2);
  if (n > 1e-12)
    for (auto& v : e) v /= n;
  return e;
}

std::vector<double> embed_face(const Image& img, const FaceBox& box,
                               const FaceEmbedder& embedder, double expand) {
  box.validate(img.width, img.height);
  const FaceBox e = expanded_square_box(box, img.width, img.height, expand);
  return embedder.embed(crop(img, e.x, e.y, e.w, e.h));
}

// --- spoof detector -----------------------------------------------------------

std::pair<std::array<double, 2>, int> SpoofDetector::classify(const Image& crop_img) const {
  const int side = input_side();
  const Image in = resize_bilinear(crop_img, side, side);
  const auto logits = net.forward(nn::image_to_tensor(in));
  const auto p = nn::softmax(logits);
  std::array<double, 2> soft{p[0], p[1]};
  return {soft, nn::argmax(logits)};
}

std::pair<std::array<double, 2>, int> detect_spoof(const Image& face_crop,
                                                   const SpoofDetector& det) {
  return det.classify(face_crop);
}

std::array<double, 2> CnnSpoofScorer::logits(const Image& crop_img) const {
  const int side = det_->input_side();
  const Image in = resize_bilinear(crop_img, side, side);
  const auto l = det_->net.forward(nn::image_to_tensor(in));
  return {l[0], l[1]};
}

double CnnSpoofScorer::ce_toward(const Image& crop_img, int target,
                                 std::array<double, 2>* logits_out,
                                 Image* grad) const {
  const int side = det_->input_side();
  const Image in = resize_bilinear(crop_img, side, side);
  nn::ConvNet::Trace trace;
  const auto logits = det_->net.forward(nn::image_to_tensor(in), grad ? &trace : nullptr);
  if (logits_out) *logits_out = {logits[0], logits[1]};
  std::vector<double> dl;
  const double loss = nn::softmax_ce(logits, target, grad ? &dl : nullptr);
  if (grad) {
    const nn::Tensor dx = det_->net.backward(trace, dl, nullptr, true);
    *grad = resize_bilinear_vjp(crop_img.height, crop_img.width, nn::tensor_to_image(dx));
  }
  return loss;
}

// --- cascade -------------------------------------------------------------------

const char* to_string(RejectionStage s) {
  switch (s) {
    case RejectionStage::kNone: return "none";
    case RejectionStage::kFaceDetection: return "face_detection";
    case RejectionStage::kFaceRecognition: return "face_recognition";
    case RejectionStage::kSpoofingDetection: return "spoofing_detection";
  }
  return "?";
}

void AuthVerdict::validate(const std::string& claimed) const {
  const bool fd_reject = rejection_stage == RejectionStage::kFaceDetection;
  if (fd_reject != !face_found) throw RejectedInput("verdict: face_found inconsistent");
  if (!face_found && (identity || spoof_label || box))
    throw RejectedInput("verdict: fields present without a face");
  const bool accept = rejection_stage == RejectionStage::kNone;
  const bool consistent =
      face_found && identity && *identity == claimed && spoof_label && *spoof_label == kLabelReal;
  if (accept != consistent) throw RejectedInput("verdict: acceptance inconsistent");
}

AuthVerdict authenticate(const AuthSystem& sys, const Image& scene,
                         const std::string& claimed, AuthTrace* trace) {
  AuthVerdict v;
  if (trace) ++trace->face_detection_calls;
  const auto box = sys.face_detector.detect(scene);
  if (!box) {
    v.rejection_stage = RejectionStage::kFaceDetection;
    return v;
  }
  v.face_found = true;
  v.box = *box;

  if (trace) ++trace->recognition_calls;
  const auto emb = embed_face(scene, *box, sys.embedder, sys.crop_expand);
  v.identity = recognize(emb, sys.gallery);
  if (*v.identity != claimed) {
    v.rejection_stage = RejectionStage::kFaceRecognition;
    return v;
  }

  if (trace) ++trace->spoof_calls;
  const FaceBox e = expanded_square_box(*box, scene.width, scene.height, sys.crop_expand);
  const auto [soft, label] = sys.spoof_detector.classify(crop(scene, e.x, e.y, e.w, e.h));
  (void)soft;
  v.spoof_label = label;
  v.rejection_stage =
      label == kLabelReal ? RejectionStage::kNone : RejectionStage::kSpoofingDetection;
  return v;
}

// --- training ---------------------------------------------------------------

namespace {

struct Example {
  const Image8* img;
  Image owned;  // used when the example is generated rather than referenced
  int label;

  Image materialize() const { return img ? dequantize(*img) : owned; }
};

/// One pass of minibatch Adam over (tensorized) examples; deterministic:
/// samples are visited in shuffled order and gradients accumulated
/// sequentially.
void train_classifier(nn::ConvNet& net, const std::vector<Example>& examples,
                      int epochs, double lr, int batch_size, Rng& rng,
                      std::vector<double>* epoch_losses) {
  nn::Adam adam(net.param_count(), lr);
  std::vector<int> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  const int side = net.spec().input_side;
  std::vector<double> grads(net.param_count());
  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    double loss_sum = 0;
    size_t pos = 0;
    while (pos < order.size()) {
      const size_t end = std::min(order.size(), pos + static_cast<size_t>(batch_size));
      std::fill(grads.begin(), grads.end(), 0.0);
      for (size_t i = pos; i < end; ++i) {
        const Example& ex = examples[static_cast<size_t>(order[i])];
        const Image img = resize_bilinear(ex.materialize(), side, side);
        nn::ConvNet::Trace tr;
        const auto logits = net.forward(nn::image_to_tensor(img), &tr);
        std::vector<double> dl;
        loss_sum += nn::softmax_ce(logits, ex.label, &dl);
        const double inv = 1.0 / static_cast<double>(end - pos);
        for (auto& d : dl) d *= inv;
        net.backward(tr, dl, &grads, false);
      }
      adam.step(net.params(), grads);
      pos = end;
    }
    if (epoch_losses) epoch_losses->push_back(loss_sum / static_cast<double>(order.size()));
  }
}

double classifier_accuracy(const nn::ConvNet& net, const std::vector<Example>& examples) {
  if (examples.empty()) return 0.0;
  const int side = net.spec().input_side;
  int correct = 0;
  for (const auto& ex : examples) {
    const Image img = resize_bilinear(ex.materialize(), side, side);
    if (nn::argmax(net.forward(nn::image_to_tensor(img))) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

std::vector<Example> labeled_examples(const LabeledCrops& crops) {
  std::vector<Example> ex;
  for (const auto& r : crops.real) ex.push_back({&r, {}, kLabelReal});
  for (const auto& s : crops.spoof) ex.push_back({&s, {}, kLabelSpoof});
  return ex;
}

}  // namespace

SpoofDetector train_spoof_detector(const std::vector<Image8>& real_set,
                                   const std::vector<Image8>& spoof_set,
                                   int epochs, double lr, Rng rng,
                                   const SpoofTrainOptions& opts, TrainReport* report) {
  if (real_set.empty() || spoof_set.empty())
    throw RejectedInput("train_spoof_detector: empty training set");
  nn::ConvNetSpec spec;
  spec.input_side = opts.input_side;
  spec.conv_channels = opts.conv_channels;
  spec.fc_dims = {2};
  Rng init_rng = rng.substream("init");
  SpoofDetector det;
  det.net = nn::ConvNet(spec, init_rng);

  std::vector<Example> train;
  for (const auto& r : real_set) train.push_back({&r, {}, kLabelReal});
  for (const auto& s : spoof_set) train.push_back({&s, {}, kLabelSpoof});

  Rng train_rng = rng.substream("epochs");
  std::vector<double> losses;
  train_classifier(det.net, train, epochs, lr, opts.batch_size, train_rng, &losses);

  if (report) {
    report->epoch_loss = losses;
    report->train_accuracy = classifier_accuracy(det.net, train);
    if (opts.val) report->val_accuracy = classifier_accuracy(det.net, labeled_examples(*opts.val));
    if (opts.test) report->test_accuracy = classifier_accuracy(det.net, labeled_examples(*opts.test));
  }
  return det;
}

double spoof_accuracy(const SpoofDetector& det, const LabeledCrops& crops) {
  return classifier_accuracy(det.net, labeled_examples(crops));
}

FaceDetector train_face_detector(const Corpus& corpus, const ChannelSpec& spec,
                                 int epochs, double lr, Rng rng,
                                 const FaceTrainOptions& opts, TrainReport* report) {
  // windows: positives are jittered ground-truth boxes (clean and
  // rebroadcast); negatives mix background boxes, partial overlaps, flat
  // patches and noise.
  std::vector<Example> train, val;
  auto add_samples = [&](Split split, std::vector<Example>& dst) {
    for (int idx : corpus.indices(split)) {
      const auto& s = corpus.samples[static_cast<size_t>(idx)];
      Rng srng = rng.substream(std::string("windows/") + s.id);
      const Image scene = dequantize(s.scene);

      auto jittered_box = [&](double pos_amp, double scale_lo, double scale_hi) {
        const double sc = srng.uniform(scale_lo, scale_hi);
        int w = std::max(8, static_cast<int>(std::lround(s.box.w * sc)));
        int h = std::max(8, static_cast<int>(std::lround(s.box.h * sc)));
        w = std::min(w, scene.width);
        h = std::min(h, scene.height);
        int x = s.box.x + static_cast<int>(std::lround(srng.uniform(-pos_amp, pos_amp) * s.box.w));
        int y = s.box.y + static_cast<int>(std::lround(srng.uniform(-pos_amp, pos_amp) * s.box.h));
        x = std::clamp(x, 0, scene.width - w);
        y = std::clamp(y, 0, scene.height - h);
        return FaceBox{x, y, w, h};
      };

      // positives
      for (int rep = 0; rep < 2; ++rep) {
        const FaceBox b = jittered_box(0.06, 0.92, 1.10);
        Image win = crop(scene, b.x, b.y, b.w, b.h);
        if (rep == 1) win = rebroadcast(win, spec, srng);
        dst.push_back({nullptr, std::move(win), 1});
      }
      // background negatives
      for (int rep = 0; rep < 2; ++rep) {
        for (int tries = 0; tries < 20; ++tries) {
          const int w = srng.uniform_int(scene.width / 4, scene.width / 2);
          const int h = static_cast<int>(std::lround(w * 1.2));
          if (h > scene.height) continue;
          const int x = srng.uniform_int(0, scene.width - w);
          const int y = srng.uniform_int(0, scene.height - h);
          const FaceBox b{x, y, w, h};
          if (b.iou(s.box) < 0.2) {
            Image win = crop(scene, b.x, b.y, b.w, b.h);
            if (rep == 1) win = rebroadcast(win, spec, srng);
            dst.push_back({nullptr, std::move(win), 0});
            break;
          }
        }
      }
      // hard negative: off-center partial overlap
      {
        const FaceBox b = jittered_box(0.55, 0.75, 1.4);
        if (b.iou(s.box) < 0.35) {
          dst.push_back({nullptr, crop(scene, b.x, b.y, b.w, b.h), 0});
        }
      }
      // flat and noise patches
      {
        Image flat(opts.input_side, opts.input_side);
        const double v0 = srng.uniform(), v1 = srng.uniform(), v2 = srng.uniform();
        for (int y = 0; y < flat.height; ++y)
          for (int x = 0; x < flat.width; ++x) {
            flat.at(y, x, 0) = v0;
            flat.at(y, x, 1) = v1;
            flat.at(y, x, 2) = v2;
          }
        dst.push_back({nullptr, std::move(flat), 0});
        Image noise(opts.input_side, opts.input_side);
        for (auto& v : noise.data) v = srng.uniform();
        dst.push_back({nullptr, std::move(noise), 0});
      }
    }
  };
  add_samples(Split::kTrain, train);
  add_samples(Split::kVal, val);
  if (train.empty()) throw RejectedInput("train_face_detector: empty train split");

  nn::ConvNetSpec nspec;
  nspec.input_side = opts.input_side;
  nspec.conv_channels = opts.conv_channels;
  nspec.fc_dims = {2};
  Rng init_rng = rng.substream("init");
  FaceDetector det;
  det.net = nn::ConvNet(nspec, init_rng);

  Rng train_rng = rng.substream("epochs");
  std::vector<double> losses;
  train_classifier(det.net, train, epochs, lr, opts.batch_size, train_rng, &losses);
  if (report) {
    report->epoch_loss = losses;
    report->train_accuracy = classifier_accuracy(det.net, train);
    report->val_accuracy = classifier_accuracy(det.net, val);
  }
  return det;
}

FaceEmbedder train_face_embedder(const Corpus& corpus, const ChannelSpec& spec,
                                 int epochs, double lr, Rng rng,
                                 const EmbedTrainOptions& opts, TrainReport* report) {
  const auto train_ids = corpus.identities(Split::kTrain);
  if (train_ids.empty()) throw RejectedInput("train_face_embedder: no train identities");
  std::map<std::string, int> id_index;
  for (size_t i = 0; i < train_ids.size(); ++i) id_index[train_ids[i]] = static_cast<int>(i);

  std::vector<Example> train;
  for (int idx : corpus.indices(Split::kTrain)) {
    const auto& s = corpus.samples[static_cast<size_t>(idx)];
    Rng srng = rng.substream(std::string("embed/") + s.id);
    const Image scene = dequantize(s.scene);
    const int label = id_index.at(s.identity);
    // jitter the crop box: at authentication time the crop comes from a
    // detected box, not the ground-truth one
    auto jittered_crop = [&]() {
      const double sc = srng.uniform(0.90, 1.15);
      int w = std::clamp(static_cast<int>(std::lround(s.box.w * sc)), 8, scene.width);
      int h = std::clamp(static_cast<int>(std::lround(s.box.h * sc)), 8, scene.height);
      int x = s.box.x + static_cast<int>(std::lround(srng.uniform(-0.08, 0.08) * s.box.w));
      int y = s.box.y + static_cast<int>(std::lround(srng.uniform(-0.08, 0.08) * s.box.h));
      x = std::clamp(x, 0, scene.width - w);
      y = std::clamp(y, 0, scene.height - h);
      const FaceBox e = expanded_square_box({x, y, w, h}, scene.width, scene.height, 0.10);
      return crop(scene, e.x, e.y, e.w, e.h);
    };
    {
      const FaceBox e = expanded_square_box(s.box, scene.width, scene.height, 0.10);
      train.push_back({nullptr, crop(scene, e.x, e.y, e.w, e.h), label});
    }
    train.push_back({nullptr, rebroadcast(jittered_crop(), spec, srng), label});
    train.push_back({nullptr, jittered_crop(), label});
  }

  nn::ConvNetSpec nspec;
  nspec.input_side = opts.input_side;
  nspec.conv_channels = opts.conv_channels;
  nspec.fc_dims = {opts.embed_dim, static_cast<int>(train_ids.size())};
  Rng init_rng = rng.substream("init");
  FaceEmbedder emb;
  emb.embed_dim = opts.embed_dim;
  emb.net = nn::ConvNet(nspec, init_rng);

  Rng train_rng = rng.substream("epochs");
  std::vector<double> losses;
  train_classifier(emb.net, train, epochs, lr, opts.batch_size, train_rng, &losses);
  if (report) {
    report->epoch_loss = losses;
    report->train_accuracy = classifier_accuracy(emb.net, train);
  }
  return emb;
}

Gallery enroll_gallery(const Corpus& corpus, Split split, const FaceEmbedder& embedder,
                       int per_identity, int k) {
  Gallery g;
  g.k = k;
  std::map<std::string, int> counts;
  for (int idx : corpus.indices(split)) {
    const auto& s = corpus.samples[static_cast<size_t>(idx)];
    if (counts[s.identity] >= per_identity) continue;
    ++counts[s.identity];
    const Image scene = dequantize(s.scene);
    g.embeddings[s.identity].push_back(embed_face(scene, s.box, embedder));
  }
  g.validate();
  return g;
}

double recognition_accuracy(const Corpus& corpus, Split split, const AuthSystem& sys) {
  const auto idxs = corpus.indices(split);
  if (idxs.empty()) return 0.0;
  int correct = 0;
  for (int idx : idxs) {
    const auto& s = corpus.samples[static_cast<size_t>(idx)];
    const Image scene = dequantize(s.scene);
    const auto box = sys.face_detector.detect(scene);
    if (!box) continue;
    const auto emb = embed_face(scene, *box, sys.embedder, sys.crop_expand);
    if (recognize(emb, sys.gallery) == s.identity) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(idxs.size());
}

}  // namespace respoof
