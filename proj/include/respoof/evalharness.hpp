#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "respoof/attacks.hpp"
#include "respoof/authsys.hpp"
#include "respoof/compositor.hpp"
#include "respoof/corpus.hpp"

#include "json.hpp"

namespace respoof {

/// Impersonate success rate: probability that at least one of `attempts`
/// attacked images drawn uniformly without replacement out of n_t succeeds,
/// given n_f failures among them: 1 - C(n_f, attempts) / C(n_t, attempts).
/// Exact integer arithmetic; requires 0 <= n_f <= n_t and n_t >= attempts.
double isr(int n_f, int n_t, int attempts = 3);

/// Fraction of attack results whose adversarial crop the detector calls
/// real when fed directly (the digital-domain pipeline).
double asr_digital(const std::vector<AttackResult>& results, const SpoofScorer& scorer);

/// Simulated physical pipeline: each attacked scene is pushed through an
/// independent rebroadcast draw and the full cascade, `trials_per_image`
/// times. Returns the success fraction and the distribution of rejection
/// stages among failed trials (face detection, recognition, spoofing;
/// all-zero when nothing failed).
std::pair<double, std::array<double, 3>> asr_physical_sim(
    const std::vector<Image>& attacked_scenes,
    const std::vector<std::string>& identities, const AuthSystem& sys,
    const ChannelSpec& spec, int trials_per_image, Rng rng);

struct PerImageRecord {
  std::string image_id;
  std::string identity;
  bool digital_success = false;
  double psnr_db = 0.0;
  double epsilon_used = 0.0;
  int iterations_used = 0;
  bool aborted = false;
  std::vector<AuthVerdict> physical_trials;
};

struct IdentityIsr {
  std::string identity;
  int n_f = 0;
  int n_t = 0;
  double isr_value = 0.0;
};

struct SetReport {
  std::string name;
  std::vector<PerImageRecord> images;
  double asr_d = 0.0;
  double asr_p = 0.0;
  double mean_psnr_db = 0.0;
  std::array<double, 3> failure_distribution{0, 0, 0};
  bool has_failures = false;
  std::vector<IdentityIsr> per_identity;
  double isr_average = 0.0;
  int isr_identities = 0;  // identities with n_t >= attempts
};

struct CampaignReport {
  std::uint64_t master_seed = 0;
  std::string config_hash;
  int corpus_samples = 0;
  int corpus_identities = 0;
  int attacked_samples = 0;
  double corpus_spoof_psnr_db = 0.0;  // channel distortion budget on the corpus
  std::vector<SetReport> sets;

  nlohmann::json to_json() const;
  static CampaignReport from_json(const nlohmann::json& j);
};

struct CampaignOptions {
  Split split = Split::kTest;          // which samples to attack
  int trials_per_image = 1;
  bool simulate_channel = true;        // false: digital pipeline only
  CompositeMode composite;
  ChannelSpec eval_channel;            // typically the Table-style spec
  int attempts = 3;                    // ISR attempts
  int jobs = 1;
  std::string artifact_dir;            // when set: per-image checkpointing
  std::uint64_t master_seed = 0;
  std::string config_hash;
};

/// Runs every attack set over the chosen corpus split: attack the spoofed
/// crop, embed it back into the scene, evaluate digitally and through the
/// simulated channel, aggregate ASR_D / ASR_P / failure distribution / ISR.
/// Attack randomness and evaluation randomness come from disjoint
/// substreams of `rng`. Per-image attack results are checkpointed under
/// artifact_dir when given, and reloaded on rerun.
CampaignReport campaign(const Corpus& corpus,
                        const std::vector<std::pair<std::string, AttackConfig>>& attack_sets,
                        const AuthSystem& sys, const ChannelSpec& attack_channel,
                        const CampaignOptions& opts, Rng rng);

// Exports.
void write_report_json(const std::string& path, const CampaignReport& report);
CampaignReport read_report_json(const std::string& path);
void write_report_csv(const std::string& images_path, const std::string& isr_path,
                      const CampaignReport& report);
void write_report_svg(const std::string& psnr_asr_path,
                      const std::string& failure_path, const CampaignReport& report);

// Attack artifact bundle (adversarial PNG + 16-bit perturbation PNG +
// metadata JSON); shared by the CLI and campaign checkpointing.
void save_attack_artifact(const std::string& dir, const std::string& image_id,
                          const SpoofSample& sample, const AttackResult& result,
                          std::uint64_t seed, const std::string& config_hash);
std::optional<AttackResult> load_attack_artifact(const std::string& dir,
                                                 const std::string& image_id,
                                                 const SpoofSample& sample);

}  // namespace respoof
