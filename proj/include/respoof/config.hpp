#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "respoof/attacks.hpp"
#include "respoof/channel.hpp"
#include "respoof/compositor.hpp"
#include "respoof/corpus.hpp"

namespace respoof {

/// Everything one experiment needs, loaded from a sectioned key=value file.
/// Unknown sections or keys are rejected. Units are part of key names
/// (px, db, deg, frac).
struct ExperimentConfig {
  std::uint64_t master_seed = 1;
  std::string out_dir = "out";

  CorpusParams corpus;
  int enroll_per_identity = 5;

  ChannelSpec channel;
  double eval_widen_factor = 1.0;

  // training
  int spoof_epochs = 20;
  int face_epochs = 12;
  int embed_epochs = 15;
  double learning_rate = 1e-4;
  int batch_size = 32;
  int spoof_input_px = 64;
  int detector_input_px = 32;
  int embed_dim = 32;
  int knn_k = 3;
  bool augment = true;
  double crop_expand = 0.10;

  // attack sets, in file order
  std::vector<std::pair<std::string, AttackConfig>> attacks;

  CompositeMode composite;

  // evaluation
  int trials_per_image = 1;
  bool simulate_channel = true;
  Split eval_split = Split::kTest;
  int isr_attempts = 3;

  /// FNV-1a over the canonical serialization; embedded in artifacts.
  std::string hash() const;
  std::string canonical() const;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text);

}  // namespace respoof
