#include "respoof/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "respoof/authsys.hpp"
#include "respoof/errors.hpp"
#include "respoof/evalharness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace respoof {

void CliOverrides::apply(ExperimentConfig& cfg) const {
  if (seed) cfg.master_seed = *seed;
  for (auto& [name, a] : cfg.attacks) {
    if (method) a.method = attack_method_from_string(*method);
    if (lambda) a.lambda = *lambda;
    if (psnr_floor_db) a.psnr_floor_db = *psnr_floor_db;
    if (eot_budget) a.eot_total_budget = *eot_budget;
    if (epsilon) a.epsilons = parse_epsilon_schedule(*epsilon);
    a.validate();
  }
  if (eval_channel) {
    if (*eval_channel == "none") cfg.simulate_channel = false;
    else if (*eval_channel == "simulated") cfg.simulate_channel = true;
    else throw ConfigError("--channel: expected none|simulated");
  }
}

std::string corpus_dir(const ExperimentConfig& cfg) { return cfg.out_dir + "/corpus"; }
std::string models_path(const ExperimentConfig& cfg) { return cfg.out_dir + "/models.bin"; }
std::string metrics_path(const ExperimentConfig& cfg) { return cfg.out_dir + "/training_metrics.json"; }
std::string attacks_dir(const ExperimentConfig& cfg) { return cfg.out_dir + "/attacks"; }
std::string eval_dir(const ExperimentConfig& cfg) { return cfg.out_dir + "/eval"; }

namespace {

int effective_jobs(const CliOverrides& ov) {
  if (ov.jobs > 0) return ov.jobs;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

AuthSystem load_auth_system(const ExperimentConfig& cfg, const Corpus& corpus) {
  auto models = nn::load_models(models_path(cfg));
  AuthSystem sys;
  sys.crop_expand = cfg.crop_expand;
  auto take = [&](const char* name) {
    auto it = models.find(name);
    if (it == models.end())
      throw MissingArtifact(std::string("model container lacks '") + name + "'");
    return std::move(it->second);
  };
  sys.face_detector.net = take("face_detector");
  sys.embedder.net = take("face_embedder");
  sys.embedder.embed_dim = cfg.embed_dim;
  sys.spoof_detector.net = take("spoof_detector");
  sys.gallery = enroll_gallery(corpus, cfg.eval_split, sys.embedder,
                               cfg.enroll_per_identity, cfg.knn_k);
  return sys;
}

std::vector<std::pair<std::string, AttackConfig>> selected_attacks(
    const ExperimentConfig& cfg, const CliOverrides& ov) {
  if (!ov.only_set) return cfg.attacks;
  std::vector<std::pair<std::string, AttackConfig>> out;
  for (const auto& a : cfg.attacks)
    if (a.first == *ov.only_set) out.push_back(a);
  if (out.empty()) throw ConfigError("unknown attack set: " + *ov.only_set);
  return out;
}

}  // namespace

void cmd_gen_corpus(const ExperimentConfig& cfg, const CliOverrides& ov) {
  const std::string dir = corpus_dir(cfg);
  if (fs::exists(dir + "/manifest.json") && !ov.force) {
    std::fprintf(stderr, "corpus already exists at %s (use --force to regenerate)\n",
                 dir.c_str());
    return;
  }
  if (fs::exists(dir)) fs::remove_all(dir);
  Rng rng = Rng(cfg.master_seed).substream("corpus");
  const Corpus corpus = generate_corpus(cfg.corpus, rng, cfg.channel);
  save_corpus(dir, corpus);
  std::printf("corpus: %zu samples, %d identities -> %s\n", corpus.samples.size(),
              cfg.corpus.total_identities(), dir.c_str());
}

void cmd_train(const ExperimentConfig& cfg, const CliOverrides& ov) {
  (void)ov;
  const Corpus corpus = load_corpus(corpus_dir(cfg));
  Rng master(cfg.master_seed);

  Rng crop_rng = master.substream("train_crops");
  const LabeledCrops train_crops = build_spoof_training_crops(
      corpus, Split::kTrain, cfg.channel, crop_rng, cfg.augment, cfg.crop_expand);
  const LabeledCrops val_crops = build_spoof_eval_crops(
      corpus, Split::kVal, cfg.channel, master.substream("val_crops"), cfg.crop_expand);
  const LabeledCrops test_crops = build_spoof_eval_crops(
      corpus, Split::kTest, cfg.channel, master.substream("test_crops"), cfg.crop_expand);

  SpoofTrainOptions sopts;
  sopts.input_side = cfg.spoof_input_px;
  sopts.batch_size = cfg.batch_size;
  sopts.val = &val_crops;
  sopts.test = &test_crops;
  TrainReport spoof_rep;
  std::printf("training spoof detector: %zu real + %zu spoof crops, %d epochs\n",
              train_crops.real.size(), train_crops.spoof.size(), cfg.spoof_epochs);
  const SpoofDetector spoof = train_spoof_detector(
      train_crops.real, train_crops.spoof, cfg.spoof_epochs, cfg.learning_rate,
      master.substream("spoof_detector"), sopts, &spoof_rep);
  std::printf("  accuracy train %.4f val %.4f test %.4f\n", spoof_rep.train_accuracy,
              spoof_rep.val_accuracy, spoof_rep.test_accuracy);

  FaceTrainOptions fopts;
  fopts.input_side = cfg.detector_input_px;
  fopts.batch_size = cfg.batch_size;
  TrainReport face_rep;
  std::printf("training face detector: %d epochs\n", cfg.face_epochs);
  const FaceDetector face = train_face_detector(corpus, cfg.channel, cfg.face_epochs,
                                                cfg.learning_rate * 10,
                                                master.substream("face_detector"),
                                                fopts, &face_rep);
  std::printf("  window accuracy train %.4f val %.4f\n", face_rep.train_accuracy,
              face_rep.val_accuracy);

  EmbedTrainOptions eopts;
  eopts.input_side = cfg.spoof_input_px;
  eopts.batch_size = cfg.batch_size;
  eopts.embed_dim = cfg.embed_dim;
  TrainReport embed_rep;
  std::printf("training face embedder: %d epochs\n", cfg.embed_epochs);
  const FaceEmbedder embedder = train_face_embedder(corpus, cfg.channel, cfg.embed_epochs,
                                                    cfg.learning_rate * 10,
                                                    master.substream("face_embedder"),
                                                    eopts, &embed_rep);
  std::printf("  identity accuracy train %.4f\n", embed_rep.train_accuracy);

  fs::create_directories(cfg.out_dir);
  std::map<std::string, nn::ConvNet> models;
  models.emplace("spoof_detector", spoof.net);
  models.emplace("face_detector", face.net);
  models.emplace("face_embedder", embedder.net);
  save_models(models_path(cfg), models);

  json metrics{{"seed", cfg.master_seed},
               {"config_hash", cfg.hash()},
               {"spoof_detector",
                {{"train_accuracy", spoof_rep.train_accuracy},
                 {"val_accuracy", spoof_rep.val_accuracy},
                 {"test_accuracy", spoof_rep.test_accuracy},
                 {"epoch_loss", spoof_rep.epoch_loss}}},
               {"face_detector",
                {{"train_accuracy", face_rep.train_accuracy},
                 {"val_accuracy", face_rep.val_accuracy},
                 {"epoch_loss", face_rep.epoch_loss}}},
               {"face_embedder",
                {{"train_accuracy", embed_rep.train_accuracy},
                 {"epoch_loss", embed_rep.epoch_loss}}}};
  std::ofstream os(metrics_path(cfg));
  os << metrics.dump(2) << "\n";
  std::printf("models -> %s\n", models_path(cfg).c_str());
}

void cmd_attack(const ExperimentConfig& cfg, const CliOverrides& ov) {
  const Corpus corpus = load_corpus(corpus_dir(cfg));
  if (!fs::exists(models_path(cfg))) throw MissingArtifact("no trained models; run train");
  const AuthSystem sys = load_auth_system(cfg, corpus);
  const CnnSpoofScorer scorer(sys.spoof_detector);
  Rng master(cfg.master_seed);

  for (const auto& [set_name, acfg] : selected_attacks(cfg, ov)) {
    const std::string dir = attacks_dir(cfg) + "/" + set_name;
    if (ov.force && fs::exists(dir)) fs::remove_all(dir);
    int done = 0, skipped = 0;
    for (int idx : corpus.indices(cfg.eval_split)) {
      const auto& sample = corpus.samples[static_cast<size_t>(idx)];
      if (load_attack_artifact(dir, sample.id, sample)) {
        ++skipped;
        continue;
      }
      const Image face = dequantize(sample.spoofed);
      Rng attack_rng = master.substream("attack/" + set_name + "/" + sample.id);
      AttackResult result;
      if (acfg.method == AttackMethod::kEot) {
        result = attack_eot(face, scorer, cfg.channel, acfg, attack_rng);
      } else {
        result = attack_digital(face, scorer, acfg);
      }
      save_attack_artifact(dir, sample.id, sample, result, attack_rng.seed(), cfg.hash());
      ++done;
    }
    std::printf("attack set '%s': %d attacked, %d already present -> %s\n",
                set_name.c_str(), done, skipped, dir.c_str());
  }
}

void cmd_eval(const ExperimentConfig& cfg, const CliOverrides& ov) {
  const Corpus corpus = load_corpus(corpus_dir(cfg));
  if (!fs::exists(models_path(cfg))) throw MissingArtifact("no trained models; run train");
  const AuthSystem sys = load_auth_system(cfg, corpus);
  const auto sets = selected_attacks(cfg, ov);
  for (const auto& [name, acfg] : sets) {
    (void)acfg;
    const std::string dir = attacks_dir(cfg) + "/" + name;
    if (!fs::exists(dir))
      throw MissingArtifact("no attack artifacts for set '" + name + "'; run attack");
  }

  CampaignOptions opts;
  opts.split = cfg.eval_split;
  opts.trials_per_image = cfg.trials_per_image;
  opts.simulate_channel = cfg.simulate_channel;
  opts.composite = cfg.composite;
  opts.eval_channel = cfg.channel.widened(cfg.eval_widen_factor);
  opts.attempts = cfg.isr_attempts;
  opts.jobs = effective_jobs(ov);
  opts.artifact_dir = attacks_dir(cfg);
  opts.master_seed = cfg.master_seed;
  opts.config_hash = cfg.hash();

  const CampaignReport report =
      campaign(corpus, sets, sys, cfg.channel, opts, Rng(cfg.master_seed));

  fs::create_directories(eval_dir(cfg));
  write_report_json(eval_dir(cfg) + "/report.json", report);
  write_report_csv(eval_dir(cfg) + "/report_images.csv",
                   eval_dir(cfg) + "/report_isr.csv", report);
  write_report_svg(eval_dir(cfg) + "/psnr_vs_asr.svg",
                   eval_dir(cfg) + "/failure_distribution.svg", report);
  for (const auto& s : report.sets) {
    std::printf("set %-8s ASR_D %6.2f%%  ASR_P %6.2f%%  mean PSNR %6.2f dB  ISR avg %6.2f%%\n",
                s.name.c_str(), 100 * s.asr_d, 100 * s.asr_p, s.mean_psnr_db,
                100 * s.isr_average);
  }
  std::printf("report -> %s\n", (eval_dir(cfg) + "/report.json").c_str());
}

void cmd_report(const ExperimentConfig& cfg, const CliOverrides& ov) {
  (void)ov;
  const CampaignReport report = read_report_json(eval_dir(cfg) + "/report.json");
  write_report_csv(eval_dir(cfg) + "/report_images.csv",
                   eval_dir(cfg) + "/report_isr.csv", report);
  write_report_svg(eval_dir(cfg) + "/psnr_vs_asr.svg",
                   eval_dir(cfg) + "/failure_distribution.svg", report);
  for (const auto& s : report.sets) {
    std::printf("=== set %s ===\n", s.name.c_str());
    std::printf("ASR_D %.2f%%  ASR_P %.2f%%  mean PSNR %.2f dB\n", 100 * s.asr_d,
                100 * s.asr_p, s.mean_psnr_db);
    if (s.has_failures) {
      std::printf("failures: face detection %.2f%%, recognition %.2f%%, spoofing %.2f%%\n",
                  100 * s.failure_distribution[0], 100 * s.failure_distribution[1],
                  100 * s.failure_distribution[2]);
    }
    for (const auto& row : s.per_identity) {
      std::printf("  %-8s (%d,%d)=", row.identity.c_str(), row.n_f, row.n_t);
      if (std::isnan(row.isr_value)) std::printf("NA\n");
      else std::printf("%.2f%%\n", 100 * row.isr_value);
    }
    std::printf("  average ISR %.2f%%\n", 100 * s.isr_average);
  }
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Physical-domain adversarial attacks against a face anti-spoofing cascade"};
  app.require_subcommand(1);

  std::string config_path;
  CliOverrides ov;
  app.add_option("-c,--config", config_path, "experiment config file")->required();
  app.add_option("--seed", ov.seed, "override master seed");
  app.add_option("--jobs", ov.jobs, "worker threads (default: cores)");
  app.add_flag("--force", ov.force, "overwrite existing artifacts");

  auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic corpus");
  auto* train = app.add_subcommand("train", "train detector, embedder and spoof models");
  auto* attack = app.add_subcommand("attack", "run configured attack sets");
  attack->add_option("--method", ov.method, "override attack method for all sets");
  attack->add_option("--lambda", ov.lambda, "override distance-penalty weight");
  attack->add_option("--psnr-floor", ov.psnr_floor_db, "override PSNR floor (dB)");
  attack->add_option("--eot-budget", ov.eot_budget, "override EOT transform budget");
  attack->add_option("--epsilon", ov.epsilon, "override epsilon schedule, e.g. [0.1:1.1,1000]");
  attack->add_option("--set", ov.only_set, "run only this attack set");
  auto* eval = app.add_subcommand("eval", "evaluate attacks digitally and through the channel");
  eval->add_option("--channel", ov.eval_channel, "none | simulated");
  eval->add_option("--set", ov.only_set, "evaluate only this attack set");
  auto* report = app.add_subcommand("report", "re-emit CSV/SVG and print the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 2 : 0;
  }

  try {
    ExperimentConfig cfg = load_config(config_path);
    ov.apply(cfg);
    if (gen->parsed()) cmd_gen_corpus(cfg, ov);
    if (train->parsed()) cmd_train(cfg, ov);
    if (attack->parsed()) cmd_attack(cfg, ov);
    if (eval->parsed()) cmd_eval(cfg, ov);
    if (report->parsed()) cmd_report(cfg, ov);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const MissingArtifact& e) {
    std::fprintf(stderr, "missing artifact: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}

}  // namespace respoof
