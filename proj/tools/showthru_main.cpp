#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "showthru/pipeline.hpp"

using showthru::FKind;
using showthru::PipelineConfig;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  uint64_t seed = 0;
  bool seed_set = false;
};

PipelineConfig resolve_config(const CommonOpts& opts) {
  PipelineConfig cfg = opts.config_path.empty()
                           ? PipelineConfig{}
                           : PipelineConfig::from_file(opts.config_path);
  cfg.out_dir = opts.out_dir;
  if (opts.seed_set) cfg.master_seed = opts.seed;
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path,
                  "Key-value config file (flat `key = value` lines)");
  cmd->add_option("--out", opts.out_dir, "Output directory")
      ->capture_default_str();
  cmd->add_option("--seed", opts.seed, "Master seed (overrides config)")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Two-channel show-through image separation: synthetic mixing, "
      "alignment, entropy-maximization training, and quality reporting"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string mode = "nonlinear";
  int runs = -1;

  CLI::App* simulate =
      app.add_subcommand("simulate", "Generate a synthetic source/mixture set");
  add_common(simulate, opts);

  CLI::App* align = app.add_subcommand(
      "align", "Co-register and normalize the acquired pair");
  add_common(align, opts);

  CLI::App* separate =
      app.add_subcommand("separate", "Train separators on the aligned pair");
  add_common(separate, opts);
  separate->add_option("--mode", mode, "linear|nonlinear")
      ->check(CLI::IsMember({"linear", "nonlinear"}))
      ->capture_default_str();
  separate->add_option("--runs", runs, "Number of training runs");

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "Compute the quality report");
  add_common(evaluate, opts);

  CLI::App* pipeline = app.add_subcommand(
      "pipeline", "simulate + align + separate (both modes) + evaluate");
  add_common(pipeline, opts);
  pipeline->add_option("--runs", runs, "Number of training runs per mode");

  CLI11_PARSE(app, argc, argv);

  try {
    PipelineConfig cfg = resolve_config(opts);
    if (runs > 0) cfg.runs = runs;
    if (simulate->parsed()) showthru::cli::cmd_simulate(cfg);
    if (align->parsed()) showthru::cli::cmd_align(cfg);
    if (separate->parsed())
      showthru::cli::cmd_separate(cfg, showthru::f_kind_from_string(mode),
                                  cfg.runs);
    if (evaluate->parsed()) showthru::cli::cmd_evaluate(cfg);
    if (pipeline->parsed()) showthru::cli::cmd_pipeline(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
