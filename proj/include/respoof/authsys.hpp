#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "respoof/attacks.hpp"
#include "respoof/corpus.hpp"
#include "respoof/facebox.hpp"
#include "respoof/image.hpp"
#include "respoof/nn.hpp"
#include "respoof/rng.hpp"

namespace respoof {

// Class convention, used everywhere: label 0 = real, 1 = spoofing.
constexpr int kLabelReal = 0;
constexpr int kLabelSpoof = 1;

/// Enrollment store for the k-NN face recognizer.
struct Gallery {
  int k = 3;
  std::map<std::string, std::vector<std::vector<double>>> embeddings;

  int dim() const;
  void validate() const;  // k odd and >= 1, uniform dims, no empty identity
};

/// Majority label among the k nearest enrolled embeddings (Euclidean).
/// Ties break by smallest summed distance, then lexicographically.
std::string recognize(const std::vector<double>& embedding, const Gallery& gallery);

/// Window-scoring face finder: a small binary CNN swept over a coarse
/// scale/position grid, refined around the best hit.
class FaceDetector {
 public:
  nn::ConvNet net;  // input 32x32, 2 logits (face / non-face)
  double threshold = 0.5;
  double window_aspect = 1.2;  // window height / width

  std::optional<FaceBox> detect(const Image& scene) const;
  double score(const Image& scene, const FaceBox& box) const;  // P(face)
};

class FaceEmbedder {
 public:
  nn::ConvNet net;  // fc stack {embed_dim, n_train_identities}
  int embed_dim = 32;

  /// Unit-norm embedding of a face crop (any resolution).
  std::vector<double> embed(const Image& crop) const;
};

class SpoofDetector {
 public:
  nn::ConvNet net;  // input 64x64, 2 logits

  int input_side() const { return net.spec().input_side; }
  /// (softmax probabilities, argmax label)
  std::pair<std::array<double, 2>, int> classify(const Image& crop) const;
};

/// SpoofScorer over a SpoofDetector: resizes the crop to the model input and
/// backpropagates through the resize, so attack gradients live at the crop's
/// own resolution.
class CnnSpoofScorer : public SpoofScorer {
 public:
  explicit CnnSpoofScorer(const SpoofDetector& det) : det_(&det) {}
  std::array<double, 2> logits(const Image& crop) const override;
  double ce_toward(const Image& crop, int target,
                   std::array<double, 2>* logits_out, Image* grad) const override;

 private:
  const SpoofDetector* det_;
};

std::pair<std::array<double, 2>, int> detect_spoof(const Image& face_crop,
                                                   const SpoofDetector& det);

/// Unit-norm embedding of the face at `box` (box validated against img,
/// then expanded 10% and squared before cropping).
std::vector<double> embed_face(const Image& img, const FaceBox& box,
                               const FaceEmbedder& embedder,
                               double expand = 0.10);

enum class RejectionStage { kNone, kFaceDetection, kFaceRecognition, kSpoofingDetection };

const char* to_string(RejectionStage s);

struct AuthVerdict {
  bool face_found = false;
  std::optional<FaceBox> box;
  std::optional<std::string> identity;
  std::optional<int> spoof_label;
  RejectionStage rejection_stage = RejectionStage::kFaceDetection;

  void validate(const std::string& claimed) const;
};

/// Stage-call counters for short-circuit tests.
struct AuthTrace {
  int face_detection_calls = 0;
  int recognition_calls = 0;
  int spoof_calls = 0;
};

struct AuthSystem {
  FaceDetector face_detector;
  FaceEmbedder embedder;
  SpoofDetector spoof_detector;
  Gallery gallery;
  double crop_expand = 0.10;
};

/// The full cascade: face detection -> recognition -> spoofing detection,
/// stopping at the first failing stage. Spoof detection sees only the
/// detected facial region.
AuthVerdict authenticate(const AuthSystem& sys, const Image& scene,
                         const std::string& claimed, AuthTrace* trace = nullptr);

// --- training -------------------------------------------------------------

struct TrainReport {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct SpoofTrainOptions {
  int input_side = 64;
  int batch_size = 32;
  std::vector<int> conv_channels{6, 12, 24, 48};
  const LabeledCrops* val = nullptr;   // optional, for reporting
  const LabeledCrops* test = nullptr;  // optional, for reporting
};

/// Adam at lr (paper recipe: 1e-4), seeded and reproducible. Throws on
/// empty inputs. epochs == 0 returns the freshly initialized detector.
SpoofDetector train_spoof_detector(const std::vector<Image8>& real_set,
                                   const std::vector<Image8>& spoof_set,
                                   int epochs, double lr, Rng rng,
                                   const SpoofTrainOptions& opts = {},
                                   TrainReport* report = nullptr);

double spoof_accuracy(const SpoofDetector& det, const LabeledCrops& crops);

struct FaceTrainOptions {
  int input_side = 32;
  int batch_size = 32;
  std::vector<int> conv_channels{8, 16, 24};
};

FaceDetector train_face_detector(const Corpus& corpus, const ChannelSpec& spec,
                                 int epochs, double lr, Rng rng,
                                 const FaceTrainOptions& opts = {},
                                 TrainReport* report = nullptr);

struct EmbedTrainOptions {
  int input_side = 64;
  int batch_size = 32;
  int embed_dim = 32;
  std::vector<int> conv_channels{6, 12, 24, 48};
};

FaceEmbedder train_face_embedder(const Corpus& corpus, const ChannelSpec& spec,
                                 int epochs, double lr, Rng rng,
                                 const EmbedTrainOptions& opts = {},
                                 TrainReport* report = nullptr);

/// Enrolls the first `per_identity` original crops of every identity in
/// `split` (clean scenes, cascade geometry).
Gallery enroll_gallery(const Corpus& corpus, Split split,
                       const FaceEmbedder& embedder, int per_identity = 5,
                       int k = 3);

/// Fraction of samples in `split` whose clean scene is recognized as its own
/// identity through detector + embedder + gallery.
double recognition_accuracy(const Corpus& corpus, Split split, const AuthSystem& sys);

}  // namespace respoof
