#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "respoof/channel.hpp"
#include "respoof/image.hpp"
#include "respoof/rng.hpp"

namespace respoof {

/// Peak signal-to-noise ratio in dB with MAX = 1; +infinity when the images
/// are identical.
double psnr(const Image& a, const Image& b);

/// Expands an epsilon schedule. Accepts a plain number ("0.3") or the sweep
/// notation "[a:b,n]" meaning n evenly spaced values from a to b inclusive.
std::vector<double> parse_epsilon_schedule(const std::string& s);

enum class AttackMethod { kFgsm, kBim, kGa, kIgsa, kIga, kEot };

AttackMethod attack_method_from_string(const std::string& s);
std::string to_string(AttackMethod m);

struct AttackConfig {
  AttackMethod method = AttackMethod::kEot;
  std::vector<double> epsilons{0.3};  // schedule: single value or sweep
  double step_size = 0.0;             // 0 -> epsilon / 10
  int iterations = 10;                // per epsilon, for iterative methods
  double lambda = 0.0;                // weight of the L_p distance penalty
  int p_norm = 2;
  double psnr_floor_db = 20.0;
  int eot_samples_per_step = 40;
  int eot_total_budget = 2000;
  double eot_learning_rate = 0.01;
  double eot_success_threshold = 1.0;  // batch success fraction needed to stop
  bool eot_resample = true;            // fresh transform draws per iteration
  std::uint64_t seed = 0;

  void validate() const;
};

struct AttackResult {
  Image rho;          // effective perturbation: adversarial - input
  Image rho_raw;      // pre-clip perturbation
  Image adversarial;  // clip01(input + rho_raw)
  double psnr_db = 0.0;
  int iterations_used = 0;
  bool digital_success = false;
  std::vector<double> loss_trace;
  double epsilon_used = 0.0;     // winning epsilon for sweep methods
  double max_rho_linf = 0.0;     // max ||effective rho||_inf seen during iteration
  bool stopped_by_psnr = false;
  bool aborted = false;
  std::string abort_reason;
};

/// Differentiable 2-way scorer under attack (class 0 = real, 1 = spoof).
/// Implementations own any preprocessing (resizing to the model input);
/// gradients are reported at the crop's resolution.
class SpoofScorer {
 public:
  virtual ~SpoofScorer() = default;
  virtual std::array<double, 2> logits(const Image& crop) const = 0;

  /// Cross-entropy toward `target` in one forward/backward pass. Fills
  /// `logits_out` and `grad` (d loss / d crop) when non-null.
  virtual double ce_toward(const Image& crop, int target,
                           std::array<double, 2>* logits_out,
                           Image* grad) const = 0;

  int predict(const Image& crop) const {
    const auto l = logits(crop);
    return l[1] > l[0] ? 1 : 0;
  }
};

/// One of the five baseline digital attacks (FGSM, BIM, GA, IGSA, IGA),
/// driven toward label 0. Sweep methods report the smallest successful
/// epsilon; iterative methods clip each iterate to the epsilon ball
/// (inf-norm for sign steps, RMS for IGA). No result is returned with
/// PSNR below cfg.psnr_floor_db.
AttackResult attack_digital(const Image& face, const SpoofScorer& scorer,
                            const AttackConfig& cfg);

/// EOT attack of the physical-domain formulation: minimizes the Monte-Carlo
/// mean of CE(f_s(r(face + rho)), 0) + lambda * ||rho||_p over transform
/// draws from `spec`, by Adam on rho, until the transform budget is spent
/// or the last batch is fully fooled with PSNR above the floor. The PSNR
/// stop condition halts distortion growth: crossing the floor rescales rho
/// back to it and terminates.
AttackResult attack_eot(const Image& face, const SpoofScorer& scorer,
                        const ChannelSpec& spec, const AttackConfig& cfg,
                        Rng rng);

/// EOT batch objective with frozen transform draws; used both internally and
/// by the finite-difference oracle. Returns the loss; writes d(loss)/d(rho)
/// when grad is non-null.
double eot_batch_loss(const Image& face, const Image& rho,
                      const SpoofScorer& scorer,
                      const std::vector<TransformParams>& draws, double lambda,
                      int p_norm, Image* grad, int* batch_successes = nullptr);

}  // namespace respoof
