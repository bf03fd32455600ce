#include "respoof/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "respoof/errors.hpp"
#include "respoof/nn.hpp"

namespace respoof {

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

std::vector<double> parse_epsilon_schedule(const std::string& s) {
  std::string t;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) t += c;
  if (t.empty()) throw RejectedInput("empty epsilon schedule");
  if (t.front() == '[') {
    if (t.back() != ']') throw RejectedInput("epsilon schedule: missing ']'");
    const auto colon = t.find(':');
    const auto comma = t.find(',');
    if (colon == std::string::npos || comma == std::string::npos || comma < colon)
      throw RejectedInput("epsilon schedule: expected [a:b,n]");
    const double a = std::stod(t.substr(1, colon - 1));
    const double b = std::stod(t.substr(colon + 1, comma - colon - 1));
    const int n = std::stoi(t.substr(comma + 1, t.size() - comma - 2));
    if (n < 1) throw RejectedInput("epsilon schedule: n must be >= 1");
    std::vector<double> out(static_cast<size_t>(n));
    if (n == 1) {
      out[0] = a;
    } else {
      for (int i = 0; i < n; ++i)
        out[static_cast<size_t>(i)] = a + (b - a) * i / (n - 1);
    }
    return out;
  }
  return {std::stod(t)};
}

AttackMethod attack_method_from_string(const std::string& s) {
  std::string u;
  for (char c : s) u += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (u == "FGSM") return AttackMethod::kFgsm;
  if (u == "BIM") return AttackMethod::kBim;
  if (u == "GA") return AttackMethod::kGa;
  if (u == "IGSA") return AttackMethod::kIgsa;
  if (u == "IGA") return AttackMethod::kIga;
  if (u == "EOT") return AttackMethod::kEot;
  throw RejectedInput("unknown attack method: " + s);
}

std::string to_string(AttackMethod m) {
  switch (m) {
    case AttackMethod::kFgsm: return "FGSM";
    case AttackMethod::kBim: return "BIM";
    case AttackMethod::kGa: return "GA";
    case AttackMethod::kIgsa: return "IGSA";
    case AttackMethod::kIga: return "IGA";
    case AttackMethod::kEot: return "EOT";
  }
  return "?";
}

void AttackConfig::validate() const {
  for (double e : epsilons)
    if (e <= 0) throw RejectedInput("attack: epsilon values must be > 0");
  if (epsilons.empty()) throw RejectedInput("attack: empty epsilon schedule");
  if (iterations < 1) throw RejectedInput("attack: iterations must be >= 1");
  if (lambda < 0) throw RejectedInput("attack: lambda must be >= 0");
  if (eot_samples_per_step < 1 || eot_samples_per_step > eot_total_budget)
    throw RejectedInput("attack: eot_samples_per_step must be in [1, eot_total_budget]");
}

namespace {

constexpr int kTargetReal = 0;

inline double sgn(double x) { return (x > 0) - (x < 0); }

double linf_norm(const Image& img) {
  double m = 0;
  for (double v : img.data) m = std::max(m, std::abs(v));
  return m;
}

double l2_norm(const Image& img) {
  double s = 0;
  for (double v : img.data) s += v * v;
  return std::sqrt(s);
}

bool all_finite(const Image& img) {
  for (double v : img.data)
    if (!std::isfinite(v)) return false;
  return true;
}

Image clipped_adv(const Image& face, const Image& rho_raw) {
  Image adv(face.height, face.width);
  for (size_t i = 0; i < adv.data.size(); ++i)
    adv.data[i] = std::clamp(face.data[i] + rho_raw.data[i], 0.0, 1.0);
  return adv;
}

void finish(AttackResult& r, const Image& face) {
  r.adversarial = clipped_adv(face, r.rho_raw);
  r.rho = Image(face.height, face.width);
  for (size_t i = 0; i < face.data.size(); ++i)
    r.rho.data[i] = r.adversarial.data[i] - face.data[i];
  r.psnr_db = psnr(face, r.adversarial);
}

AttackResult aborted_result(const Image& face, const std::string& why) {
  AttackResult r;
  r.rho_raw = Image(face.height, face.width);
  finish(r, face);
  r.aborted = true;
  r.abort_reason = why;
  return r;
}

/// Single-step sweep attacks (FGSM, GA). The gradient is computed once at
/// the clean input; candidates scale a fixed direction, so the sweep stops
/// at the first success or once the PSNR budget is crossed (larger epsilons
/// only add distortion).
AttackResult sweep_attack(const Image& face, const SpoofScorer& scorer,
                          const AttackConfig& cfg, bool sign_step) {
  AttackResult res;
  Image grad;
  const double loss0 = scorer.ce_toward(face, kTargetReal, nullptr, &grad);
  if (!std::isfinite(loss0) || !all_finite(grad))
    return aborted_result(face, "non-finite gradient");
  res.loss_trace.push_back(loss0);

  Image dir(face.height, face.width);
  if (sign_step) {
    for (size_t i = 0; i < grad.data.size(); ++i) dir.data[i] = -sgn(grad.data[i]);
  } else {
    const double gmax = linf_norm(grad);
    if (gmax > 0)
      for (size_t i = 0; i < grad.data.size(); ++i) dir.data[i] = -grad.data[i] / gmax;
  }

  std::vector<double> eps = cfg.epsilons;
  std::sort(eps.begin(), eps.end());
  Image best_rho(face.height, face.width);
  for (double e : eps) {
    ++res.iterations_used;
    Image rho_raw(face.height, face.width);
    for (size_t i = 0; i < rho_raw.data.size(); ++i) rho_raw.data[i] = e * dir.data[i];
    const Image adv = clipped_adv(face, rho_raw);
    if (psnr(face, adv) < cfg.psnr_floor_db) {
      res.stopped_by_psnr = true;
      break;
    }
    best_rho = rho_raw;
    if (scorer.predict(adv) == kTargetReal) {
      res.rho_raw = rho_raw;
      res.epsilon_used = e;
      res.digital_success = true;
      finish(res, face);
      res.max_rho_linf = linf_norm(res.rho);
      return res;
    }
  }
  res.rho_raw = best_rho;  // strongest in-budget attempt, unsuccessful
  finish(res, face);
  res.max_rho_linf = linf_norm(res.rho);
  return res;
}

/// Iterative attacks (BIM, IGSA, IGA). For each epsilon in the schedule the
/// perturbation is grown by gradient steps and clipped to the epsilon ball
/// after every step; success or the PSNR floor ends the attack.
AttackResult iterative_attack(const Image& face, const SpoofScorer& scorer,
                              const AttackConfig& cfg, bool sign_step) {
  AttackResult res;
  std::vector<double> eps = cfg.epsilons;
  std::sort(eps.begin(), eps.end());
  const size_t n = face.data.size();
  const double rms_scale = std::sqrt(static_cast<double>(n));

  for (double e : eps) {
    Image rho_raw(face.height, face.width);
    const double alpha = cfg.step_size > 0 ? cfg.step_size : e / 10.0;
    for (int it = 0; it < cfg.iterations; ++it) {
      ++res.iterations_used;
      const Image adv = clipped_adv(face, rho_raw);
      if (scorer.predict(adv) == kTargetReal) {
        res.rho_raw = rho_raw;
        res.epsilon_used = e;
        res.digital_success = true;
        finish(res, face);
        return res;
      }
      Image grad;
      const double loss = scorer.ce_toward(adv, kTargetReal, nullptr, &grad);
      if (!std::isfinite(loss) || !all_finite(grad))
        return aborted_result(face, "non-finite gradient");
      res.loss_trace.push_back(loss);

      Image next = rho_raw;
      if (sign_step) {
        for (size_t i = 0; i < n; ++i) {
          next.data[i] = std::clamp(next.data[i] - alpha * sgn(grad.data[i]), -e, e);
        }
      } else {
        const double grms = l2_norm(grad) / rms_scale;
        if (grms == 0.0) break;  // flat: no direction to follow
        for (size_t i = 0; i < n; ++i)
          next.data[i] -= alpha * grad.data[i] / (grms * rms_scale);
        const double rms = l2_norm(next) / rms_scale;
        if (rms > e) {
          const double f = e / rms;
          for (auto& v : next.data) v *= f;
        }
      }
      const Image next_adv = clipped_adv(face, next);
      double eff_linf = 0;
      for (size_t i = 0; i < n; ++i)
        eff_linf = std::max(eff_linf, std::abs(next_adv.data[i] - face.data[i]));
      res.max_rho_linf = std::max(res.max_rho_linf, eff_linf);
      if (psnr(face, next_adv) < cfg.psnr_floor_db) {
        res.stopped_by_psnr = true;
        break;  // keep rho_raw from before the violating step
      }
      rho_raw = std::move(next);
    }
    // final check at this epsilon
    const Image adv = clipped_adv(face, rho_raw);
    if (scorer.predict(adv) == kTargetReal) {
      res.rho_raw = rho_raw;
      res.epsilon_used = e;
      res.digital_success = true;
      finish(res, face);
      return res;
    }
    res.rho_raw = rho_raw;
    if (res.stopped_by_psnr) break;  // larger epsilons only distort more
  }
  finish(res, face);
  return res;
}

}  // namespace

AttackResult attack_digital(const Image& face, const SpoofScorer& scorer,
                            const AttackConfig& cfg) {
  cfg.validate();
  switch (cfg.method) {
    case AttackMethod::kFgsm: return sweep_attack(face, scorer, cfg, true);
    case AttackMethod::kGa: return sweep_attack(face, scorer, cfg, false);
    case AttackMethod::kBim:
    case AttackMethod::kIgsa: return iterative_attack(face, scorer, cfg, true);
    case AttackMethod::kIga: return iterative_attack(face, scorer, cfg, false);
    case AttackMethod::kEot:
      throw RejectedInput("attack_digital: EOT requires attack_eot");
  }
  throw RejectedInput("attack_digital: unknown method");
}

double eot_batch_loss(const Image& face, const Image& rho,
                      const SpoofScorer& scorer,
                      const std::vector<TransformParams>& draws, double lambda,
                      int p_norm, Image* grad, int* batch_successes) {
  if (draws.empty()) throw RejectedInput("eot_batch_loss: no transform draws");
  const size_t n = face.data.size();

  // adversarial image and the clip mask for the pass-through subgradient
  Image adv(face.height, face.width);
  std::vector<bool> open(n);
  for (size_t i = 0; i < n; ++i) {
    const double pre = face.data[i] + rho.data[i];
    adv.data[i] = std::clamp(pre, 0.0, 1.0);
    open[i] = pre >= 0.0 && pre <= 1.0;
  }

  if (grad) *grad = Image(face.height, face.width);
  double loss_sum = 0.0;
  int successes = 0;
  for (const auto& params : draws) {
    TransformTape tape;
    const Image transformed = apply_transform_fwd(adv, params, tape);
    Image g;
    std::array<double, 2> lg{};
    loss_sum += scorer.ce_toward(transformed, kTargetReal, &lg, grad ? &g : nullptr);
    if (lg[1] <= lg[0]) ++successes;
    if (grad) {
      const Image g_adv = apply_transform_vjp(tape, g);
      for (size_t i = 0; i < n; ++i) grad->data[i] += g_adv.data[i];
    }
  }
  const double inv_b = 1.0 / static_cast<double>(draws.size());
  double loss = loss_sum * inv_b;
  if (grad)
    for (auto& v : grad->data) v *= inv_b;

  if (lambda > 0) {
    // distance penalty on the effective perturbation
    Image eff(face.height, face.width);
    for (size_t i = 0; i < n; ++i) eff.data[i] = adv.data[i] - face.data[i];
    if (p_norm != 2) throw RejectedInput("eot_batch_loss: only p=2 implemented");
    const double norm = l2_norm(eff);
    loss += lambda * norm;
    if (grad && norm > 1e-12) {
      for (size_t i = 0; i < n; ++i) grad->data[i] += lambda * eff.data[i] / norm;
    }
  }
  if (grad) {
    for (size_t i = 0; i < n; ++i)
      if (!open[i]) grad->data[i] = 0.0;
  }
  if (batch_successes) *batch_successes = successes;
  return loss;
}

AttackResult attack_eot(const Image& face, const SpoofScorer& scorer,
                        const ChannelSpec& spec, const AttackConfig& cfg,
                        Rng rng) {
  cfg.validate();
  AttackResult res;
  res.rho_raw = Image(face.height, face.width);

  const int batch = cfg.eot_samples_per_step;
  const int iters = std::max(1, cfg.eot_total_budget / batch);
  nn::Adam adam(res.rho_raw.data.size(), cfg.eot_learning_rate);

  std::vector<TransformParams> draws(static_cast<size_t>(batch));
  if (!cfg.eot_resample) {
    for (auto& d : draws) d = sample_transform(spec, rng);
  }

  for (int it = 0; it < iters; ++it) {
    if (cfg.eot_resample) {
      for (auto& d : draws) d = sample_transform(spec, rng);
    }
    Image grad;
    int successes = 0;
    const double loss = eot_batch_loss(face, res.rho_raw, scorer, draws,
                                       cfg.lambda, cfg.p_norm, &grad, &successes);
    if (!std::isfinite(loss) || !all_finite(grad)) {
      res = aborted_result(face, "non-finite EOT loss");
      return res;
    }
    res.loss_trace.push_back(loss);
    res.iterations_used = it + 1;

    const double cur_psnr = psnr(face, clipped_adv(face, res.rho_raw));
    const double rate = static_cast<double>(successes) / batch;
    if (rate >= cfg.eot_success_threshold && cur_psnr >= cfg.psnr_floor_db) break;

    adam.step(res.rho_raw.data, grad.data);
    res.max_rho_linf = std::max(res.max_rho_linf, linf_norm(res.rho_raw));

    // PSNR stop condition: shrink back onto the floor and terminate.
    if (psnr(face, clipped_adv(face, res.rho_raw)) < cfg.psnr_floor_db) {
      double lo = 0.0, hi = 1.0;
      Image scaled = res.rho_raw;
      for (int b = 0; b < 40; ++b) {
        const double mid = 0.5 * (lo + hi);
        for (size_t i = 0; i < scaled.data.size(); ++i)
          scaled.data[i] = res.rho_raw.data[i] * mid;
        if (psnr(face, clipped_adv(face, scaled)) >= cfg.psnr_floor_db)
          lo = mid;
        else
          hi = mid;
      }
      for (size_t i = 0; i < scaled.data.size(); ++i)
        scaled.data[i] = res.rho_raw.data[i] * lo;
      res.rho_raw = scaled;
      res.stopped_by_psnr = true;
      break;
    }
  }

  finish(res, face);
  res.digital_success = scorer.predict(res.adversarial) == kTargetReal;
  return res;
}

}  // namespace respoof
