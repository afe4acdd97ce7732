#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsn/trainer.hpp"

namespace dsn {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Plain-text key=value experiment description with a strict schema: unknown
// keys are rejected, scenario and variant are required, everything else has a
// documented default.
struct ExperimentConfig {
  Scenario scenario = Scenario::glyph16;
  Variant variant = Variant::dsn;
  Similarity similarity = Similarity::dann;  // dsn only

  double alpha = 0.05, beta = 0.05, gamma = 0.25, xi = 0.125;
  int64_t warmup_steps = 500;
  double lr = 0.01, momentum = 0.9, lr_decay_factor = 0.9;
  int64_t lr_decay_interval = 1000;
  int64_t steps = 2000, eval_interval = 250;
  int batch_size = 32;
  int train_per_domain = 5000, eval_per_domain = 1000;
  ReconKind recon = ReconKind::si_mse;
  uint64_t seed = 1;
  std::string output_dir = "out";

  static ExperimentConfig parse_text(const std::string& text);
  static ExperimentConfig parse_file(const std::string& path);

  // Canonical key-sorted rendering of every semantic field (output_dir is a
  // location, not an experiment parameter, and stays out).
  std::string canonical() const;
  std::string run_id() const;  // 16 hex chars, FNV-1a over canonical()

  ScenarioSpec scenario_spec() const;
  TrainConfig train_config() const;
  uint64_t model_seed() const;
};

uint64_t derive_seed(uint64_t seed, uint64_t tag);
std::string fmt_double(double v);  // shortest round-trip-stable %.17g

struct RunOptions {
  std::optional<std::string> out_override;
  std::optional<uint64_t> seed_override;
  bool quiet = false;
};

// Exit codes: 0 success, 2 configuration error, 3 numerical failure.
int cmd_run(const std::string& config_path, const RunOptions& opts);
int cmd_table(const std::string& runs_dir, bool quiet);
int cmd_dump_recon(const std::string& config_path, const RunOptions& opts, int n);
int cmd_gen_data(const std::string& config_path, const RunOptions& opts);
int cmd_gradcheck(bool quiet);

// Checkpoint, metrics and summary locations for a resolved config.
std::string run_dir(const ExperimentConfig& cfg);

struct GradcheckLine {
  std::string name;
  double max_rel_err = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckLine> lines;
  bool all_pass = true;
  double seconds = 0.0;
};

// Finite-difference sweep over every loss (20 random small instances each by
// default) plus an end-to-end model probe. fault_scale != 1 corrupts the
// analytic si_mse gradient; it exists so tests can prove the checker catches
// a broken backward.
GradcheckReport run_gradcheck_suite(int inputs_per_loss = 20, double fault_scale = 1.0);

}  // namespace dsn
