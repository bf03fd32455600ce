#pragma once

#include <optional>
#include <string>

#include "respoof/config.hpp"

namespace respoof {

/// Command-line overrides applied on top of the config file.
struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<double> lambda;
  std::optional<double> psnr_floor_db;
  std::optional<int> eot_budget;
  std::optional<std::string> epsilon;
  std::optional<std::string> eval_channel;  // "none" | "simulated"
  std::optional<std::string> only_set;      // restrict attack/eval to one set
  int jobs = 0;                             // 0 -> hardware concurrency
  bool force = false;

  void apply(ExperimentConfig& cfg) const;
};

// Derived artifact locations under cfg.out_dir.
std::string corpus_dir(const ExperimentConfig& cfg);
std::string models_path(const ExperimentConfig& cfg);
std::string metrics_path(const ExperimentConfig& cfg);
std::string attacks_dir(const ExperimentConfig& cfg);
std::string eval_dir(const ExperimentConfig& cfg);

// Subcommand bodies. Errors surface as exceptions; main() maps them to the
// exit-code contract (0 ok, 2 config, 3 missing artifact, 4 runtime).
void cmd_gen_corpus(const ExperimentConfig& cfg, const CliOverrides& ov);
void cmd_train(const ExperimentConfig& cfg, const CliOverrides& ov);
void cmd_attack(const ExperimentConfig& cfg, const CliOverrides& ov);
void cmd_eval(const ExperimentConfig& cfg, const CliOverrides& ov);
void cmd_report(const ExperimentConfig& cfg, const CliOverrides& ov);

int run_cli(int argc, char** argv);

}  // namespace respoof
