#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "showthru/config.hpp"
#include "showthru/mixsim.hpp"
#include "showthru/network.hpp"

namespace showthru {

/// Everything the batch commands need, resolved from a key-value config file
/// plus command-line overrides.  Unknown config keys are rejected.
struct PipelineConfig {
  std::string out_dir = "out";
  uint64_t master_seed = 1;

  // simulate
  int sim_size = 500;
  int sim_bars = 25;
  double mix_q = 0.6;
  double mix_gamma = 2.0;
  double mix_sigma = 0.01;
  int mix_levels = 256;
  std::string source1_path;  // optional external sources
  std::string source2_path;

  // align
  int align_block_size = 25;
  int align_upsample = 4;
  int align_search_radius = 16;
  bool align_flip_horizontal = false;
  int align_coarse_dx = 0;
  int align_coarse_dy = 0;
  std::string acquired1_path;  // optional external acquired pair
  std::string acquired2_path;

  // train
  int epochs_linear = 200;
  int epochs_nonlinear = 400;
  int priming_epochs = 100;
  int train_set_size = 5000;
  double learning_rate = 1e-3;
  int runs = 10;

  // evaluate
  int eval_samples = 5000;
  int eval_k = 3;
  bool scatter = false;
  bool report_csv = true;
  bool report_json = true;

  static PipelineConfig from_config(const KeyValueConfig& kv);
  static PipelineConfig from_file(const std::string& path);

  MixParams mix_params() const;
};

namespace cli {

/// Writes the synthetic source pair, the mixed pair and a manifest.
void cmd_simulate(const PipelineConfig& cfg);

/// Flip / coarse shift / local block alignment / pair normalization of the
/// acquired pair; writes the preprocessed pair and the displacement field.
void cmd_align(const PipelineConfig& cfg);

/// Trains `runs` separators of the given kind on the preprocessed pair and
/// writes per-run models, raw and display separations, and objective traces.
/// When sources are available the runs are scored and the best/worst run
/// (by Q2) is name-tagged.
void cmd_separate(const PipelineConfig& cfg, FKind mode, int runs);

/// Quality report (baseline / linear / nonlinear) plus optional scatter
/// sample dumps.
void cmd_evaluate(const PipelineConfig& cfg);

/// simulate -> align -> separate(linear) -> separate(nonlinear) -> evaluate,
/// resuming completed stages recorded in the manifest.
void cmd_pipeline(const PipelineConfig& cfg);

}  // namespace cli

/// Stage bookkeeping shared by the commands (exposed for tests).
nlohmann::json load_manifest(const std::string& out_dir);
void save_manifest(const std::string& out_dir, const nlohmann::json& manifest);

}  // namespace showthru
