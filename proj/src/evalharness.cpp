#include "respoof/evalharness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <thread>

#include "respoof/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace respoof {

namespace {

std::uint64_t choose3(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  std::uint64_t num = 1, den = 1;
  for (std::uint64_t i = 0; i < k; ++i) {
    num *= n - i;
    den *= i + 1;
  }
  return num / den;  // exact: product of k consecutive integers divides k!
}

/// Deterministic ordered map over [0, n): results land in slot order
/// regardless of the worker count.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  workers.reserve(static_cast<size_t>(jobs));
  for (int t = 0; t < jobs; ++t) {
    workers.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace

double isr(int n_f, int n_t, int attempts) {
  if (attempts < 1) throw RejectedInput("isr: attempts must be >= 1");
  if (n_f < 0 || n_f > n_t) throw RejectedInput("isr: need 0 <= n_f <= n_t");
  if (n_t < attempts) throw RejectedInput("isr: n_t must be >= attempts");
  const std::uint64_t num = choose3(static_cast<std::uint64_t>(n_f),
                                    static_cast<std::uint64_t>(attempts));
  const std::uint64_t den = choose3(static_cast<std::uint64_t>(n_t),
                                    static_cast<std::uint64_t>(attempts));
  return 1.0 - static_cast<double>(num) / static_cast<double>(den);
}

double asr_digital(const std::vector<AttackResult>& results, const SpoofScorer& scorer) {
  if (results.empty()) throw RejectedInput("asr_digital: empty result list");
  int ok = 0;
  for (const auto& r : results)
    if (scorer.predict(r.adversarial) == kLabelReal) ++ok;
  return static_cast<double>(ok) / static_cast<double>(results.size());
}

namespace {

std::array<double, 3> failure_distribution_of(const std::vector<const AuthVerdict*>& failed) {
  std::array<double, 3> dist{0, 0, 0};
  if (failed.empty()) return dist;
  for (const auto* v : failed) {
    switch (v->rejection_stage) {
      case RejectionStage::kFaceDetection: dist[0] += 1; break;
      case RejectionStage::kFaceRecognition: dist[1] += 1; break;
      case RejectionStage::kSpoofingDetection: dist[2] += 1; break;
      case RejectionStage::kNone: break;
    }
  }
  for (auto& d : dist) d /= static_cast<double>(failed.size());
  return dist;
}

}  // namespace

std::pair<double, std::array<double, 3>> asr_physical_sim(
    const std::vector<Image>& attacked_scenes,
    const std::vector<std::string>& identities, const AuthSystem& sys,
    const ChannelSpec& spec, int trials_per_image, Rng rng) {
  if (attacked_scenes.size() != identities.size())
    throw RejectedInput("asr_physical_sim: scene/identity count mismatch");
  if (trials_per_image < 1) throw RejectedInput("asr_physical_sim: trials must be >= 1");
  int successes = 0, total = 0;
  std::vector<AuthVerdict> verdicts;
  for (size_t i = 0; i < attacked_scenes.size(); ++i) {
    Rng img_rng = rng.substream(i);
    for (int t = 0; t < trials_per_image; ++t) {
      const Image recaptured = rebroadcast(attacked_scenes[i], spec, img_rng);
      AuthVerdict v = authenticate(sys, recaptured, identities[i]);
      ++total;
      if (v.rejection_stage == RejectionStage::kNone) ++successes;
      verdicts.push_back(std::move(v));
    }
  }
  std::vector<const AuthVerdict*> failed;
  for (const auto& v : verdicts)
    if (v.rejection_stage != RejectionStage::kNone) failed.push_back(&v);
  return {static_cast<double>(successes) / static_cast<double>(total),
          failure_distribution_of(failed)};
}

// --- attack artifacts --------------------------------------------------------

void save_attack_artifact(const std::string& dir, const std::string& image_id,
                          const SpoofSample& sample, const AttackResult& result,
                          std::uint64_t seed, const std::string& config_hash) {
  fs::create_directories(dir);
  const std::string base = dir + "/" + image_id;
  write_png(base + "_adv.png", quantize(result.adversarial));
  write_png16_offset(base + "_rho.png", result.rho);
  json meta{{"image_id", image_id},
            {"identity", sample.identity},
            {"psnr_db", std::isfinite(result.psnr_db) ? json(result.psnr_db) : json("inf")},
            {"digital_success", result.digital_success},
            {"iterations_used", result.iterations_used},
            {"epsilon_used", result.epsilon_used},
            {"stopped_by_psnr", result.stopped_by_psnr},
            {"aborted", result.aborted},
            {"abort_reason", result.abort_reason},
            {"loss_trace", result.loss_trace},
            {"seed", seed},
            {"config_hash", config_hash}};
  std::ofstream os(base + ".json");
  os << meta.dump(2) << "\n";
}

std::optional<AttackResult> load_attack_artifact(const std::string& dir,
                                                 const std::string& image_id,
                                                 const SpoofSample& sample) {
  const std::string base = dir + "/" + image_id;
  std::ifstream is(base + ".json");
  if (!is) return std::nullopt;
  json meta = json::parse(is);
  AttackResult r;
  const Image face = dequantize(sample.spoofed);
  r.rho = read_png16_offset(base + "_rho.png");
  if (!r.rho.same_shape(face)) throw std::runtime_error("artifact shape mismatch: " + image_id);
  r.rho_raw = r.rho;
  r.adversarial = face;
  for (size_t i = 0; i < face.data.size(); ++i)
    r.adversarial.data[i] = std::clamp(face.data[i] + r.rho.data[i], 0.0, 1.0);
  r.psnr_db = meta.at("psnr_db").is_string() ? std::numeric_limits<double>::infinity()
                                             : meta.at("psnr_db").get<double>();
  r.digital_success = meta.at("digital_success").get<bool>();
  r.iterations_used = meta.at("iterations_used").get<int>();
  r.epsilon_used = meta.at("epsilon_used").get<double>();
  r.stopped_by_psnr = meta.at("stopped_by_psnr").get<bool>();
  r.aborted = meta.at("aborted").get<bool>();
  r.abort_reason = meta.at("abort_reason").get<std::string>();
  r.loss_trace = meta.at("loss_trace").get<std::vector<double>>();
  return r;
}

// --- campaign ----------------------------------------------------------------

CampaignReport campaign(const Corpus& corpus,
                        const std::vector<std::pair<std::string, AttackConfig>>& attack_sets,
                        const AuthSystem& sys, const ChannelSpec& attack_channel,
                        const CampaignOptions& opts, Rng rng) {
  CampaignReport report;
  report.master_seed = opts.master_seed;
  report.config_hash = opts.config_hash;
  report.corpus_samples = static_cast<int>(corpus.samples.size());
  {
    std::map<std::string, int> ids;
    for (const auto& s : corpus.samples) ids[s.identity] += 1;
    report.corpus_identities = static_cast<int>(ids.size());
  }
  const auto idxs = corpus.indices(opts.split);
  report.attacked_samples = static_cast<int>(idxs.size());

  // channel distortion budget over the attacked split
  {
    double acc = 0;
    int n = 0;
    for (int i : idxs) {
      const auto& s = corpus.samples[static_cast<size_t>(i)];
      const double p = psnr(dequantize(s.original), dequantize(s.spoofed));
      if (std::isfinite(p)) {
        acc += p;
        ++n;
      }
    }
    report.corpus_spoof_psnr_db = n ? acc / n : 0.0;
  }

  CnnSpoofScorer scorer(sys.spoof_detector);

  for (const auto& [set_name, cfg] : attack_sets) {
    SetReport sr;
    sr.name = set_name;
    sr.images.resize(idxs.size());

    const std::string set_dir =
        opts.artifact_dir.empty() ? std::string() : opts.artifact_dir + "/" + set_name;

    parallel_for(static_cast<int>(idxs.size()), opts.jobs, [&](int slot) {
      const auto& sample = corpus.samples[static_cast<size_t>(idxs[static_cast<size_t>(slot)])];
      PerImageRecord rec;
      rec.image_id = sample.id;
      rec.identity = sample.identity;

      AttackResult result;
      std::optional<AttackResult> cached;
      if (!set_dir.empty()) cached = load_attack_artifact(set_dir, sample.id, sample);
      if (cached) {
        result = std::move(*cached);
      } else {
        const Image face = dequantize(sample.spoofed);
        Rng attack_rng = rng.substream("attack/" + set_name + "/" + sample.id);
        if (cfg.method == AttackMethod::kEot) {
          result = attack_eot(face, scorer, attack_channel, cfg, attack_rng);
        } else {
          result = attack_digital(face, scorer, cfg);
        }
        if (!set_dir.empty()) {
          save_attack_artifact(set_dir, sample.id, sample, result,
                               attack_rng.seed(), opts.config_hash);
          // evaluate what was persisted, so fresh and resumed runs agree
          cached = load_attack_artifact(set_dir, sample.id, sample);
          result = std::move(*cached);
        }
      }
      rec.digital_success = result.digital_success;
      rec.psnr_db = result.psnr_db;
      rec.epsilon_used = result.epsilon_used;
      rec.iterations_used = result.iterations_used;
      rec.aborted = result.aborted;

      if (opts.simulate_channel) {
        const Image scene = dequantize(sample.scene);
        const Image adv_at_box = resize_bilinear(result.adversarial, sample.box.h, sample.box.w);
        const Image attacked_scene = embed_face(scene, sample.box, adv_at_box, opts.composite);
        Rng eval_rng = rng.substream("eval/" + set_name + "/" + sample.id);
        for (int t = 0; t < opts.trials_per_image; ++t) {
          const Image recaptured = rebroadcast(attacked_scene, opts.eval_channel, eval_rng);
          rec.physical_trials.push_back(authenticate(sys, recaptured, sample.identity));
        }
      }
      sr.images[static_cast<size_t>(slot)] = std::move(rec);
    });

    // aggregation (deterministic: slot order)
    int dig_ok = 0, phys_ok = 0, phys_total = 0;
    double psnr_acc = 0;
    int psnr_n = 0;
    std::vector<const AuthVerdict*> failed;
    std::map<std::string, std::pair<int, int>> per_id;  // identity -> (n_f, n_t)
    for (const auto& rec : sr.images) {
      if (rec.digital_success) ++dig_ok;
      if (std::isfinite(rec.psnr_db)) {
        psnr_acc += rec.psnr_db;
        ++psnr_n;
      }
      bool any_success = false;
      for (const auto& v : rec.physical_trials) {
        ++phys_total;
        if (v.rejection_stage == RejectionStage::kNone) {
          ++phys_ok;
          any_success = true;
        } else {
          failed.push_back(&v);
        }
      }
      auto& [n_f, n_t] = per_id[rec.identity];
      ++n_t;
      if (!rec.physical_trials.empty() && !any_success) ++n_f;
    }
    sr.asr_d = sr.images.empty() ? 0.0 : static_cast<double>(dig_ok) / sr.images.size();
    sr.asr_p = phys_total ? static_cast<double>(phys_ok) / phys_total : 0.0;
    sr.mean_psnr_db = psnr_n ? psnr_acc / psnr_n : 0.0;
    sr.has_failures = !failed.empty();
    sr.failure_distribution = failure_distribution_of(failed);
    double isr_sum = 0;
    for (const auto& [identity, counts] : per_id) {
      IdentityIsr row;
      row.identity = identity;
      row.n_f = counts.first;
      row.n_t = counts.second;
      if (counts.second >= opts.attempts) {
        row.isr_value = isr(counts.first, counts.second, opts.attempts);
        isr_sum += row.isr_value;
        ++sr.isr_identities;
      } else {
        row.isr_value = std::numeric_limits<double>::quiet_NaN();
      }
      sr.per_identity.push_back(std::move(row));
    }
    sr.isr_average = sr.isr_identities ? isr_sum / sr.isr_identities : 0.0;
    report.sets.push_back(std::move(sr));
  }
  return report;
}

// --- serialization -------------------------------------------------------------

namespace {

json verdict_json(const AuthVerdict& v) {
  json j{{"face_found", v.face_found},
         {"rejection_stage", to_string(v.rejection_stage)}};
  if (v.box) j["box"] = json{{"x", v.box->x}, {"y", v.box->y}, {"w", v.box->w}, {"h", v.box->h}};
  if (v.identity) j["identity"] = *v.identity;
  if (v.spoof_label) j["spoof_label"] = *v.spoof_label;
  return j;
}

AuthVerdict verdict_from_json(const json& j) {
  AuthVerdict v;
  v.face_found = j.at("face_found").get<bool>();
  const std::string stage = j.at("rejection_stage").get<std::string>();
  if (stage == "none") v.rejection_stage = RejectionStage::kNone;
  else if (stage == "face_detection") v.rejection_stage = RejectionStage::kFaceDetection;
  else if (stage == "face_recognition") v.rejection_stage = RejectionStage::kFaceRecognition;
  else v.rejection_stage = RejectionStage::kSpoofingDetection;
  if (j.contains("box")) {
    const auto& b = j.at("box");
    v.box = FaceBox{b.at("x").get<int>(), b.at("y").get<int>(), b.at("w").get<int>(),
                    b.at("h").get<int>()};
  }
  if (j.contains("identity")) v.identity = j.at("identity").get<std::string>();
  if (j.contains("spoof_label")) v.spoof_label = j.at("spoof_label").get<int>();
  return v;
}

json psnr_json(double v) { return std::isfinite(v) ? json(v) : json("inf"); }
double psnr_from_json(const json& j) {
  return j.is_string() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

json CampaignReport::to_json() const {
  json sets_j = json::array();
  for (const auto& s : sets) {
    json imgs = json::array();
    for (const auto& r : s.images) {
      json trials = json::array();
      for (const auto& v : r.physical_trials) trials.push_back(verdict_json(v));
      imgs.push_back(json{{"image_id", r.image_id},
                          {"identity", r.identity},
                          {"digital_success", r.digital_success},
                          {"psnr_db", psnr_json(r.psnr_db)},
                          {"epsilon_used", r.epsilon_used},
                          {"iterations_used", r.iterations_used},
                          {"aborted", r.aborted},
                          {"physical_trials", trials}});
    }
    json ids = json::array();
    for (const auto& row : s.per_identity) {
      json r{{"identity", row.identity}, {"n_f", row.n_f}, {"n_t", row.n_t}};
      r["isr"] = std::isnan(row.isr_value) ? json() : json(row.isr_value);
      ids.push_back(r);
    }
    sets_j.push_back(json{{"name", s.name},
                          {"asr_d", s.asr_d},
                          {"asr_p", s.asr_p},
                          {"mean_psnr_db", s.mean_psnr_db},
                          {"failure_distribution",
                           {{"face_detection", s.failure_distribution[0]},
                            {"face_recognition", s.failure_distribution[1]},
                            {"spoofing_detection", s.failure_distribution[2]}}},
                          {"has_failures", s.has_failures},
                          {"per_identity_isr", ids},
                          {"isr_average", s.isr_average},
                          {"isr_identities", s.isr_identities},
                          {"images", imgs}});
  }
  return json{{"version", 1},
              {"master_seed", master_seed},
              {"config_hash", config_hash},
              {"corpus_samples", corpus_samples},
              {"corpus_identities", corpus_identities},
              {"attacked_samples", attacked_samples},
              {"corpus_spoof_psnr_db", corpus_spoof_psnr_db},
              {"sets", sets_j}};
}

CampaignReport CampaignReport::from_json(const json& j) {
  CampaignReport r;
  r.master_seed = j.at("master_seed").get<std::uint64_t>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.corpus_samples = j.at("corpus_samples").get<int>();
  r.corpus_identities = j.at("corpus_identities").get<int>();
  r.attacked_samples = j.at("attacked_samples").get<int>();
  r.corpus_spoof_psnr_db = j.at("corpus_spoof_psnr_db").get<double>();
  for (const auto& sj : j.at("sets")) {
    SetReport s;
    s.name = sj.at("name").get<std::string>();
    s.asr_d = sj.at("asr_d").get<double>();
    s.asr_p = sj.at("asr_p").get<double>();
    s.mean_psnr_db = sj.at("mean_psnr_db").get<double>();
    const auto& fd = sj.at("failure_distribution");
    s.failure_distribution = {fd.at("face_detection").get<double>(),
                              fd.at("face_recognition").get<double>(),
                              fd.at("spoofing_detection").get<double>()};
    s.has_failures = sj.at("has_failures").get<bool>();
    s.isr_average = sj.at("isr_average").get<double>();
    s.isr_identities = sj.at("isr_identities").get<int>();
    for (const auto& ij : sj.at("per_identity_isr")) {
      IdentityIsr row;
      row.identity = ij.at("identity").get<std::string>();
      row.n_f = ij.at("n_f").get<int>();
      row.n_t = ij.at("n_t").get<int>();
      row.isr_value = ij.at("isr").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                             : ij.at("isr").get<double>();
      s.per_identity.push_back(std::move(row));
    }
    for (const auto& rj : sj.at("images")) {
      PerImageRecord rec;
      rec.image_id = rj.at("image_id").get<std::string>();
      rec.identity = rj.at("identity").get<std::string>();
      rec.digital_success = rj.at("digital_success").get<bool>();
      rec.psnr_db = psnr_from_json(rj.at("psnr_db"));
      rec.epsilon_used = rj.at("epsilon_used").get<double>();
      rec.iterations_used = rj.at("iterations_used").get<int>();
      rec.aborted = rj.at("aborted").get<bool>();
      for (const auto& tv : rj.at("physical_trials"))
        rec.physical_trials.push_back(verdict_from_json(tv));
      s.images.push_back(std::move(rec));
    }
    r.sets.push_back(std::move(s));
  }
  return r;
}

void write_report_json(const std::string& path, const CampaignReport& report) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write report: " + path);
  os << report.to_json().dump(2) << "\n";
}

CampaignReport read_report_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifact("no report at " + path);
  return CampaignReport::from_json(json::parse(is));
}

void write_report_csv(const std::string& images_path, const std::string& isr_path,
                      const CampaignReport& report) {
  {
    std::ofstream os(images_path);
    os << "set,image_id,identity,digital_success,psnr_db,trials,successful_trials,first_rejection\n";
    for (const auto& s : report.sets) {
      for (const auto& r : s.images) {
        int ok = 0;
        std::string first_rej = "";
        for (const auto& v : r.physical_trials) {
          if (v.rejection_stage == RejectionStage::kNone) ++ok;
          else if (first_rej.empty()) first_rej = to_string(v.rejection_stage);
        }
        os << s.name << ',' << r.image_id << ',' << r.identity << ','
           << (r.digital_success ? 1 : 0) << ',' << r.psnr_db << ','
           << r.physical_trials.size() << ',' << ok << ',' << first_rej << '\n';
      }
    }
  }
  {
    std::ofstream os(isr_path);
    os << "set,identity,n_f,n_t,isr_percent\n";
    for (const auto& s : report.sets) {
      for (const auto& row : s.per_identity) {
        os << s.name << ',' << row.identity << ',' << row.n_f << ',' << row.n_t << ',';
        if (std::isnan(row.isr_value)) os << "NA";
        else os << row.isr_value * 100.0;
        os << '\n';
      }
      os << s.name << ",average,,," << s.isr_average * 100.0 << '\n';
    }
  }
}

namespace {

void svg_header(std::ofstream& os, int w, int h) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\""
     << h << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

const char* set_color(size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  return colors[i % 5];
}

}  // namespace

void write_report_svg(const std::string& psnr_asr_path, const std::string& failure_path,
                      const CampaignReport& report) {
  {
    std::ofstream os(psnr_asr_path);
    const int W = 480, H = 360, L = 60, B = 40;
    svg_header(os, W, H);
    os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\">mean PSNR vs ASR (sim. physical)</text>\n";
    // axes: psnr 15..45 dB, asr 0..1
    auto px = [&](double psnr_db) { return L + (psnr_db - 15.0) / 30.0 * (W - L - 20); };
    auto py = [&](double asr) { return H - B - asr * (H - B - 40); };
    os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - 20 << "\" y2=\""
       << H - B << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << L
       << "\" y2=\"40\" stroke=\"black\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\">mean PSNR [dB]</text>\n";
    for (size_t i = 0; i < report.sets.size(); ++i) {
      const auto& s = report.sets[i];
      os << "<circle cx=\"" << px(s.mean_psnr_db) << "\" cy=\"" << py(s.asr_p)
         << "\" r=\"5\" fill=\"" << set_color(i) << "\"/>\n";
      os << "<text x=\"" << px(s.mean_psnr_db) + 8 << "\" y=\"" << py(s.asr_p) + 4
         << "\" font-size=\"12\">" << s.name << "</text>\n";
    }
    os << "</svg>\n";
  }
  {
    std::ofstream os(failure_path);
    const int W = 480, H = 360, L = 60, B = 60;
    svg_header(os, W, H);
    os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\">failure distribution by stage</text>\n";
    const char* stages[] = {"face det.", "face rec.", "spoof det."};
    const double group_w = (W - L - 20) / 3.0;
    for (int st = 0; st < 3; ++st) {
      os << "<text x=\"" << L + group_w * (st + 0.5) << "\" y=\"" << H - B + 20
         << "\" text-anchor=\"middle\" font-size=\"12\">" << stages[st] << "</text>\n";
      const double bar_w = group_w / (static_cast<double>(report.sets.size()) + 1.0);
      for (size_t i = 0; i < report.sets.size(); ++i) {
        const double frac = report.sets[i].failure_distribution[static_cast<size_t>(st)];
        const double bh = frac * (H - B - 50);
        os << "<rect x=\"" << L + group_w * st + bar_w * (static_cast<double>(i) + 0.5)
           << "\" y=\"" << H - B - bh << "\" width=\"" << bar_w * 0.9 << "\" height=\""
           << bh << "\" fill=\"" << set_color(i) << "\"/>\n";
      }
    }
    double ly = 40;
    for (size_t i = 0; i < report.sets.size(); ++i) {
      os << "<rect x=\"" << W - 140 << "\" y=\"" << ly - 10 << "\" width=\"12\" height=\"12\" fill=\""
         << set_color(i) << "\"/>\n<text x=\"" << W - 122 << "\" y=\"" << ly
         << "\" font-size=\"12\">" << report.sets[i].name << "</text>\n";
      ly += 18;
    }
    os << "</svg>\n";
  }
}

}  // namespace respoof
