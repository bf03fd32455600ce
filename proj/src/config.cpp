#include "respoof/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "respoof/errors.hpp"
#include "respoof/rng.hpp"

namespace respoof {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

struct RawConfig {
  // section -> key -> value; top-level keys live under ""
  std::map<std::string, std::map<std::string, std::string>> sections;
  std::vector<std::string> section_order;
};

RawConfig tokenize(const std::string& text) {
  RawConfig raw;
  std::string section;
  raw.section_order.push_back("");
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": bad section");
      section = trim(line.substr(1, line.size() - 2));
      if (!raw.sections.count(section)) raw.section_order.push_back(section);
      raw.sections[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    auto& sec = raw.sections[section];
    if (sec.count(key))
      throw ConfigError("config: duplicate key '" + key + "' in [" + section + "]");
    sec[key] = value;
  }
  return raw;
}

/// Pulls typed values out of one section and rejects leftovers.
class SectionReader {
 public:
  SectionReader(const std::string& name, std::map<std::string, std::string> kv)
      : name_(name), kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    std::string v = it->second;
    kv_.erase(it);
    return v;
  }
  double num(const std::string& key, double def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    const std::string v = it->second;
    kv_.erase(it);
    try {
      size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ConfigError("config [" + name_ + "] " + key + ": not a number: " + v);
    }
  }
  int integer(const std::string& key, int def) {
    const double x = num(key, def);
    const int i = static_cast<int>(x);
    if (x != i) throw ConfigError("config [" + name_ + "] " + key + ": expected integer");
    return i;
  }
  bool boolean(const std::string& key, bool def) {
    const std::string v = str(key, def ? "true" : "false");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config [" + name_ + "] " + key + ": expected boolean");
  }
  ChannelSpec::Range range(const std::string& key, ChannelSpec::Range def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    std::istringstream is(it->second);
    kv_.erase(it);
    ChannelSpec::Range r{};
    if (!(is >> r[0] >> r[1]))
      throw ConfigError("config [" + name_ + "] " + key + ": expected 'lo hi'");
    std::string extra;
    if (is >> extra) throw ConfigError("config [" + name_ + "] " + key + ": trailing junk");
    return r;
  }

  void finish() const {
    if (!kv_.empty())
      throw ConfigError("config: unknown key '" + kv_.begin()->first + "' in [" + name_ + "]");
  }

 private:
  std::string name_;
  std::map<std::string, std::string> kv_;
};

AttackConfig parse_attack_section(const std::string& name, SectionReader& r) {
  AttackConfig a;
  const std::string method = r.str("method", "EOT");
  a.method = attack_method_from_string(method);
  a.epsilons = parse_epsilon_schedule(r.str("epsilon", "0.3"));
  a.step_size = r.num("step_size", 0.0);
  a.iterations = r.integer("iterations", 10);
  a.lambda = r.num("lambda", 0.0);
  a.p_norm = r.integer("p_norm", 2);
  a.psnr_floor_db = r.num("psnr_floor_db", 20.0);
  a.eot_samples_per_step = r.integer("eot_samples_per_step", 40);
  a.eot_total_budget = r.integer("eot_total_budget", 2000);
  a.eot_learning_rate = r.num("eot_learning_rate", 0.01);
  a.eot_success_threshold = r.num("eot_success_threshold", 1.0);
  a.eot_resample = r.boolean("eot_resample", true);
  r.finish();
  a.validate();
  (void)name;
  return a;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  RawConfig raw = tokenize(text);
  ExperimentConfig cfg;

  for (const auto& section : raw.section_order) {
    SectionReader r(section.empty() ? "(top)" : section, raw.sections[section]);
    if (section.empty()) {
      const double seed = r.num("master_seed", -1);
      if (seed < 0) throw ConfigError("config: master_seed is required");
      cfg.master_seed = static_cast<std::uint64_t>(seed);
      r.finish();
    } else if (section == "paths") {
      cfg.out_dir = r.str("out_dir", cfg.out_dir);
      r.finish();
    } else if (section == "corpus") {
      cfg.corpus.train_identities = r.integer("train_identities", cfg.corpus.train_identities);
      cfg.corpus.val_identities = r.integer("val_identities", cfg.corpus.val_identities);
      cfg.corpus.test_identities = r.integer("test_identities", cfg.corpus.test_identities);
      cfg.corpus.per_train_identity = r.integer("samples_per_train_identity", cfg.corpus.per_train_identity);
      cfg.corpus.per_test_identity = r.integer("samples_per_test_identity", cfg.corpus.per_test_identity);
      cfg.corpus.scene_px = r.integer("scene_px", cfg.corpus.scene_px);
      cfg.enroll_per_identity = r.integer("enroll_per_identity", cfg.enroll_per_identity);
      r.finish();
      cfg.corpus.validate();
    } else if (section == "channel") {
      ChannelSpec d;  // Table defaults
      cfg.channel.rotation_deg = r.range("rotation_deg", d.rotation_deg);
      cfg.channel.shear_deg = r.range("shear_deg", d.shear_deg);
      cfg.channel.scale = r.range("scale", d.scale);
      cfg.channel.translate_frac = r.range("translate_frac", d.translate_frac);
      cfg.channel.perspective = r.range("perspective", d.perspective);
      cfg.channel.brightness = r.range("brightness", d.brightness);
      cfg.channel.contrast = r.range("contrast", d.contrast);
      cfg.channel.blur_sigma_px = r.range("blur_sigma_px", d.blur_sigma_px);
      cfg.channel.hue_sat_shift = r.range("hue_sat_shift", d.hue_sat_shift);
      cfg.eval_widen_factor = r.num("eval_widen_factor", 1.0);
      r.finish();
      cfg.channel.validate();
    } else if (section == "training") {
      cfg.spoof_epochs = r.integer("spoof_epochs", cfg.spoof_epochs);
      cfg.face_epochs = r.integer("face_epochs", cfg.face_epochs);
      cfg.embed_epochs = r.integer("embed_epochs", cfg.embed_epochs);
      cfg.learning_rate = r.num("learning_rate", cfg.learning_rate);
      cfg.batch_size = r.integer("batch_size", cfg.batch_size);
      cfg.spoof_input_px = r.integer("spoof_input_px", cfg.spoof_input_px);
      cfg.detector_input_px = r.integer("detector_input_px", cfg.detector_input_px);
      cfg.embed_dim = r.integer("embed_dim", cfg.embed_dim);
      cfg.knn_k = r.integer("knn_k", cfg.knn_k);
      cfg.augment = r.boolean("augment", cfg.augment);
      cfg.crop_expand = r.num("crop_expand", cfg.crop_expand);
      r.finish();
    } else if (section == "compositor") {
      const std::string mode = r.str("mode", "paste");
      if (mode == "paste") {
        cfg.composite = CompositeMode::paste();
      } else if (mode == "feathered") {
        cfg.composite = CompositeMode::feathered(r.num("feather_radius_px", 3.0));
      } else {
        throw ConfigError("config [compositor] mode: expected paste|feathered");
      }
      r.num("feather_radius_px", 0.0);  // consume when present with paste
      r.finish();
    } else if (section == "evaluation") {
      cfg.trials_per_image = r.integer("trials_per_image", cfg.trials_per_image);
      const std::string ch = r.str("channel", "simulated");
      if (ch == "simulated") cfg.simulate_channel = true;
      else if (ch == "none") cfg.simulate_channel = false;
      else throw ConfigError("config [evaluation] channel: expected simulated|none");
      const std::string split = r.str("split", "test");
      cfg.eval_split = split_from_string(split);
      cfg.isr_attempts = r.integer("isr_attempts", cfg.isr_attempts);
      r.finish();
    } else if (section.rfind("attack.", 0) == 0) {
      const std::string name = section.substr(7);
      if (name.empty()) throw ConfigError("config: attack section needs a name: [attack.NAME]");
      cfg.attacks.emplace_back(name, parse_attack_section(name, r));
    } else {
      throw ConfigError("config: unknown section [" + section + "]");
    }
  }
  if (cfg.trials_per_image < 1) throw ConfigError("config: trials_per_image must be >= 1");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "master_seed=" << master_seed << ";out=" << out_dir;
  os << ";corpus=" << corpus.train_identities << ',' << corpus.val_identities << ','
     << corpus.test_identities << ',' << corpus.per_train_identity << ','
     << corpus.per_test_identity << ',' << corpus.scene_px << ',' << enroll_per_identity;
  const auto dump_range = [&](const ChannelSpec::Range& r) { os << r[0] << ':' << r[1] << ','; };
  os << ";channel=";
  dump_range(channel.rotation_deg);
  dump_range(channel.shear_deg);
  dump_range(channel.scale);
  dump_range(channel.translate_frac);
  dump_range(channel.perspective);
  dump_range(channel.brightness);
  dump_range(channel.contrast);
  dump_range(channel.blur_sigma_px);
  dump_range(channel.hue_sat_shift);
  os << "widen=" << eval_widen_factor;
  os << ";train=" << spoof_epochs << ',' << face_epochs << ',' << embed_epochs << ','
     << learning_rate << ',' << batch_size << ',' << spoof_input_px << ','
     << detector_input_px << ',' << embed_dim << ',' << knn_k << ',' << augment << ','
     << crop_expand;
  for (const auto& [name, a] : attacks) {
    os << ";attack." << name << '=' << to_string(a.method) << ",eps[";
    for (double e : a.epsilons) os << e << ' ';
    os << "]," << a.step_size << ',' << a.iterations << ',' << a.lambda << ',' << a.p_norm
       << ',' << a.psnr_floor_db << ',' << a.eot_samples_per_step << ','
       << a.eot_total_budget << ',' << a.eot_learning_rate << ','
       << a.eot_success_threshold << ',' << a.eot_resample;
  }
  os << ";composite=" << (composite.kind == CompositeMode::Kind::kPaste ? "paste" : "feathered")
     << ',' << composite.feather_radius;
  os << ";eval=" << trials_per_image << ',' << simulate_channel << ','
     << to_string(eval_split) << ',' << isr_attempts;
  return os.str();
}

std::string ExperimentConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical())));
  return buf;
}

}  // namespace respoof
