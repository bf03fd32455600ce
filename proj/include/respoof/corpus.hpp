#pragma once

#include <string>
#include <vector>

#include "respoof/channel.hpp"
#include "respoof/facebox.hpp"
#include "respoof/image.hpp"
#include "respoof/rng.hpp"

namespace respoof {

enum class Split { kTrain, kVal, kTest };

const char* to_string(Split s);
Split split_from_string(const std::string& s);

/// One attackable unit: the original face crop I0, its once-rebroadcast
/// version (the attacker's forged spoofing image), and the full scene the
/// crop came from. scene[box] == original bit-exactly.
struct SpoofSample {
  std::string id;
  std::string identity;
  Split split = Split::kTrain;
  Image8 scene;
  FaceBox box;
  Image8 original;  // scene crop at box
  Image8 spoofed;   // rebroadcast(original), quantized
};

struct CorpusParams {
  int train_identities = 12;
  int val_identities = 3;
  int test_identities = 9;
  int per_train_identity = 84;  // samples per train/val identity
  int per_test_identity = 20;   // samples per test identity (the attack set)
  int scene_px = 128;

  int total_identities() const {
    return train_identities + val_identities + test_identities;
  }
  void validate() const;
};

struct Corpus {
  CorpusParams params;
  std::vector<SpoofSample> samples;

  std::vector<int> indices(Split s) const;
  std::vector<std::string> identities(Split s) const;
};

/// Fully seeded procedural corpus with identity-disjoint splits; identities
/// are assigned to splits up front, so no identity ever appears in two.
Corpus generate_corpus(const CorpusParams& params, Rng rng, const ChannelSpec& spec);

/// Convenience form: n_identities total, split roughly 60/20/20 by identity
/// (at least one each when n_identities >= 3), uniform per-identity count.
Corpus generate_corpus(int n_identities, int per_identity, Rng rng,
                       const ChannelSpec& spec);

// On-disk layout: <dir>/<split>/<sample_id>_{scene,real,spoof}.png plus
// manifest.json carrying params, a per-sample table, and a flat
// file -> {identity, split, role, box} mapping.
void save_corpus(const std::string& dir, const Corpus& corpus);
Corpus load_corpus(const std::string& dir);

/// Square crop of `box` grown by `expand` on each dimension, shifted to stay
/// inside the image (side capped at the image's short edge).
FaceBox expanded_square_box(const FaceBox& box, int img_w, int img_h, double expand);

/// Training material for the spoof detector. Real crops are clean or
/// geometry-only jittered (same warp family, photometric stages disabled) so
/// that resampling and border fill are not a class giveaway; spoof crops go
/// through the full channel.
struct LabeledCrops {
  std::vector<Image8> real;
  std::vector<Image8> spoof;
};

LabeledCrops build_spoof_training_crops(const Corpus& corpus, Split split,
                                        const ChannelSpec& spec, Rng rng,
                                        bool augment, double crop_expand = 0.10);

/// Held-out evaluation crops at the cascade's geometry: expanded clean crop
/// (real) and its rebroadcast (spoof), one pair per sample.
LabeledCrops build_spoof_eval_crops(const Corpus& corpus, Split split,
                                    const ChannelSpec& spec, Rng rng,
                                    double crop_expand = 0.10);

}  // namespace respoof
