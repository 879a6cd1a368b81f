#include "showthru/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "showthru/align.hpp"
#include "showthru/metrics.hpp"
#include "showthru/rng.hpp"
#include "showthru/trainer.hpp"

namespace fs = std::filesystem;

namespace showthru {

namespace {

const std::set<std::string> kKnownKeys = {
    "seed",
    "sim.size",
    "sim.bars",
    "mix.q",
    "mix.gamma",
    "mix.sigma",
    "mix.levels",
    "paths.source1",
    "paths.source2",
    "paths.acquired1",
    "paths.acquired2",
    "align.block_size",
    "align.upsample",
    "align.search_radius",
    "align.flip_horizontal",
    "align.coarse_dx",
    "align.coarse_dy",
    "train.epochs_linear",
    "train.epochs_nonlinear",
    "train.priming_epochs",
    "train.set_size",
    "train.learning_rate",
    "train.runs",
    "eval.samples",
    "eval.k",
    "eval.scatter",
    "report.csv",
    "report.json",
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << text;
}

std::string stage_label(FKind mode) {
  return std::string("separate_") + to_string(mode);
}

// Raw separated components can leave [0,1]; persist them as 16-bit PNG over
// their own affine range and record the range so evaluation can restore the
// original values (quantization error ~2e-5 of the range).
std::array<double, 2> save_raw_image(const ImageGray& img,
                                     const fs::path& path) {
  double lo = 0.0, hi = 1.0;
  for (double v : img.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  ImageGray mapped = img;
  const double scale = 1.0 / (hi - lo);
  for (double& v : mapped.data) v = (v - lo) * scale;
  save_grayscale(mapped, path.string(), 16);
  return {lo, hi};
}

ImageGray load_raw_image(const fs::path& path,
                         const std::array<double, 2>& range) {
  ImageGray img = load_grayscale(path.string());
  const double lo = range[0], hi = range[1];
  for (double& v : img.data) v = v * (hi - lo) + lo;
  return img;
}

bool stage_done(const nlohmann::json& manifest, const std::string& stage) {
  return manifest.contains("stages") && manifest["stages"].contains(stage) &&
         manifest["stages"][stage].value("done", false);
}

void require_stage(const nlohmann::json& manifest, const std::string& stage,
                   const std::string& hint) {
  if (!stage_done(manifest, stage))
    throw std::runtime_error("stage '" + stage + "' has not been run yet; " +
                             hint);
}

ImageGray load_stage_image(const PipelineConfig& cfg,
                           const nlohmann::json& manifest,
                           const std::string& stage, const std::string& key) {
  const std::string rel =
      manifest.at("stages").at(stage).at("files").at(key).get<std::string>();
  return load_grayscale((fs::path(cfg.out_dir) / rel).string());
}

TrainConfig train_config_for(const PipelineConfig& cfg, FKind mode) {
  TrainConfig tc = TrainConfig::defaults(mode);
  tc.epochs = (mode == FKind::linear) ? cfg.epochs_linear : cfg.epochs_nonlinear;
  if (mode == FKind::nonlinear) tc.priming_epochs = cfg.priming_epochs;
  tc.train_set_size = cfg.train_set_size;
  tc.learning_rate = cfg.learning_rate;
  tc.seed = derive_seed(cfg.master_seed, stage_label(mode));
  return tc;
}

std::string trace_csv(const SeparatorModel& model) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,objective\n";
  for (size_t e = 0; e < model.objective_trace.size(); ++e)
    os << e << ',' << model.objective_trace[e] << '\n';
  return os.str();
}

void dump_scatter(const ImageGray& a, const ImageGray& b, int n, uint64_t seed,
                  const fs::path& path) {
  const PixelPairSet set = sample_pixel_pairs(a, b, n, seed);
  std::ostringstream os;
  os.precision(17);
  os << "x1,x2\n";
  for (const auto& s : set.samples) os << s[0] << ',' << s[1] << '\n';
  write_text(path, os.str());
}

}  // namespace

PipelineConfig PipelineConfig::from_config(const KeyValueConfig& kv) {
  for (const auto& [key, value] : kv.entries())
    if (!kKnownKeys.count(key))
      throw std::runtime_error("unknown config key: " + key);

  PipelineConfig cfg;
  cfg.master_seed = kv.get_u64("seed", cfg.master_seed);
  cfg.sim_size = kv.get_int("sim.size", cfg.sim_size);
  cfg.sim_bars = kv.get_int("sim.bars", cfg.sim_bars);
  cfg.mix_q = kv.get_double("mix.q", cfg.mix_q);
  cfg.mix_gamma = kv.get_double("mix.gamma", cfg.mix_gamma);
  cfg.mix_sigma = kv.get_double("mix.sigma", cfg.mix_sigma);
  cfg.mix_levels = kv.get_int("mix.levels", cfg.mix_levels);
  cfg.source1_path = kv.get_string("paths.source1", "");
  cfg.source2_path = kv.get_string("paths.source2", "");
  cfg.acquired1_path = kv.get_string("paths.acquired1", "");
  cfg.acquired2_path = kv.get_string("paths.acquired2", "");
  cfg.align_block_size = kv.get_int("align.block_size", cfg.align_block_size);
  cfg.align_upsample = kv.get_int("align.upsample", cfg.align_upsample);
  cfg.align_search_radius =
      kv.get_int("align.search_radius", cfg.align_search_radius);
  cfg.align_flip_horizontal =
      kv.get_bool("align.flip_horizontal", cfg.align_flip_horizontal);
  cfg.align_coarse_dx = kv.get_int("align.coarse_dx", cfg.align_coarse_dx);
  cfg.align_coarse_dy = kv.get_int("align.coarse_dy", cfg.align_coarse_dy);
  cfg.epochs_linear = kv.get_int("train.epochs_linear", cfg.epochs_linear);
  cfg.epochs_nonlinear =
      kv.get_int("train.epochs_nonlinear", cfg.epochs_nonlinear);
  cfg.priming_epochs = kv.get_int("train.priming_epochs", cfg.priming_epochs);
  cfg.train_set_size = kv.get_int("train.set_size", cfg.train_set_size);
  cfg.learning_rate = kv.get_double("train.learning_rate", cfg.learning_rate);
  cfg.runs = kv.get_int("train.runs", cfg.runs);
  cfg.eval_samples = kv.get_int("eval.samples", cfg.eval_samples);
  cfg.eval_k = kv.get_int("eval.k", cfg.eval_k);
  cfg.scatter = kv.get_bool("eval.scatter", cfg.scatter);
  cfg.report_csv = kv.get_bool("report.csv", cfg.report_csv);
  cfg.report_json = kv.get_bool("report.json", cfg.report_json);
  return cfg;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  return from_config(KeyValueConfig::parse_file(path));
}

MixParams PipelineConfig::mix_params() const {
  MixParams p;
  p.q = mix_q;
  p.gamma = mix_gamma;
  p.sigma = mix_sigma;
  p.levels = mix_levels;
  p.seed = derive_seed(master_seed, "mix");
  return p;
}

nlohmann::json load_manifest(const std::string& out_dir) {
  const fs::path path = fs::path(out_dir) / "manifest.json";
  if (!fs::exists(path))
    return {{"version", 1}, {"stages", nlohmann::json::object()}};
  std::ifstream in(path);
  nlohmann::json manifest;
  in >> manifest;
  return manifest;
}

void save_manifest(const std::string& out_dir, const nlohmann::json& manifest) {
  write_text(fs::path(out_dir) / "manifest.json", manifest.dump(2) + "\n");
}

namespace cli {

void cmd_simulate(const PipelineConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  nlohmann::json manifest = load_manifest(cfg.out_dir);

  ImageGray s1, s2;
  const bool external = !cfg.source1_path.empty() || !cfg.source2_path.empty();
  const uint64_t sources_seed = derive_seed(cfg.master_seed, "sources");
  if (external) {
    if (cfg.source1_path.empty() || cfg.source2_path.empty())
      throw std::runtime_error("simulate: need both source paths or neither");
    s1 = load_grayscale(cfg.source1_path);
    s2 = load_grayscale(cfg.source2_path);
    if (!s1.same_size(s2))
      throw std::runtime_error("simulate: source images differ in size");
  } else {
    std::tie(s1, s2) = generate_bars_pair(cfg.sim_bars, cfg.sim_size, sources_seed);
  }

  const MixParams p = cfg.mix_params();
  const auto [m1, m2] = mix_showthrough(s1, s2, p);

  const fs::path out(cfg.out_dir);
  save_grayscale(s1, (out / "s1.png").string(), 16);
  save_grayscale(s2, (out / "s2.png").string(), 16);
  save_grayscale(m1, (out / "m1.png").string(), 16);
  save_grayscale(m2, (out / "m2.png").string(), 16);

  manifest["master_seed"] = cfg.master_seed;
  manifest["stages"]["simulate"] = {
      {"done", true},
      {"external_sources", external},
      {"sources_seed", sources_seed},
      {"mix", {{"q", p.q}, {"gamma", p.gamma}, {"sigma", p.sigma},
               {"levels", p.levels}, {"seed", p.seed}}},
      {"files", {{"s1", "s1.png"}, {"s2", "s2.png"},
                 {"m1", "m1.png"}, {"m2", "m2.png"}}}};
  save_manifest(cfg.out_dir, manifest);
}

void cmd_align(const PipelineConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  nlohmann::json manifest = load_manifest(cfg.out_dir);

  ImageGray a1, a2;
  if (!cfg.acquired1_path.empty() || !cfg.acquired2_path.empty()) {
    if (cfg.acquired1_path.empty() || cfg.acquired2_path.empty())
      throw std::runtime_error("align: need both acquired paths or neither");
    a1 = load_grayscale(cfg.acquired1_path);
    a2 = load_grayscale(cfg.acquired2_path);
  } else {
    require_stage(manifest, "simulate",
                  "run `simulate` first or set paths.acquired1/2");
    a1 = load_stage_image(cfg, manifest, "simulate", "m1");
    a2 = load_stage_image(cfg, manifest, "simulate", "m2");
  }
  if (!a1.same_size(a2))
    throw std::runtime_error("align: acquired images differ in size");

  if (cfg.align_flip_horizontal) a2 = flip_horizontal(a2);
  if (cfg.align_coarse_dx != 0 || cfg.align_coarse_dy != 0)
    a2 = coarse_shift(a2, cfg.align_coarse_dx, cfg.align_coarse_dy);

  auto [aligned2, field] =
      local_align(a1, a2, cfg.align_block_size, cfg.align_upsample,
                  cfg.align_search_radius);
  auto [n1, n2] = normalize_pair(a1, aligned2);

  const fs::path out(cfg.out_dir);
  save_grayscale(n1, (out / "m1_aligned.png").string(), 16);
  save_grayscale(n2, (out / "m2_aligned.png").string(), 16);
  write_text(out / "displacement_field.json", field.to_json().dump(2) + "\n");

  manifest["stages"]["align"] = {
      {"done", true},
      {"flip_horizontal", cfg.align_flip_horizontal},
      {"coarse_shift", {cfg.align_coarse_dx, cfg.align_coarse_dy}},
      {"block_size", cfg.align_block_size},
      {"upsample", cfg.align_upsample},
      {"search_radius", cfg.align_search_radius},
      {"files", {{"m1_aligned", "m1_aligned.png"},
                 {"m2_aligned", "m2_aligned.png"},
                 {"field", "displacement_field.json"}}}};
  save_manifest(cfg.out_dir, manifest);
}

void cmd_separate(const PipelineConfig& cfg, FKind mode, int runs) {
  nlohmann::json manifest = load_manifest(cfg.out_dir);
  require_stage(manifest, "align", "run `align` first");
  const ImageGray m1 = load_stage_image(cfg, manifest, "align", "m1_aligned");
  const ImageGray m2 = load_stage_image(cfg, manifest, "align", "m2_aligned");

  const bool have_sources = stage_done(manifest, "simulate");
  ImageGray s1, s2;
  if (have_sources) {
    s1 = load_stage_image(cfg, manifest, "simulate", "s1");
    s2 = load_stage_image(cfg, manifest, "simulate", "s2");
  }

  const std::string label = to_string(mode);
  const fs::path dir = fs::path(cfg.out_dir) / label;
  fs::create_directories(dir);

  const TrainConfig tc = train_config_for(cfg, mode);
  const EvalParams eval{cfg.eval_samples, cfg.eval_k};

  nlohmann::json runs_json = nlohmann::json::array();
  std::vector<QualityReport> reports;

  for (int run = 0; run < runs; ++run) {
    TrainConfig run_cfg = tc;
    run_cfg.seed = derive_seed(tc.seed, "run_" + std::to_string(run));
    const PixelPairSet train_set = training_set_for(m1, m2, run_cfg);
    const SeparatorModel model = train_on_pairs(train_set, run_cfg);
    const auto [y1, y2] = separate(model, m1, m2);

    const std::string suffix = "_run" + std::to_string(run);
    const fs::path model_path = dir / ("model" + suffix + ".json");
    write_text(model_path, serialize_model(model).dump() + "\n");
    const auto r1 = save_raw_image(y1, dir / ("y1" + suffix + ".png"));
    const auto r2 = save_raw_image(y2, dir / ("y2" + suffix + ".png"));
    save_grayscale(display_normalize(y1),
                   (dir / ("y1" + suffix + "_display.png")).string(), 8);
    save_grayscale(display_normalize(y2),
                   (dir / ("y2" + suffix + "_display.png")).string(), 8);
    write_text(dir / ("trace" + suffix + ".csv"), trace_csv(model));

    nlohmann::json run_json = {
        {"seed", run_cfg.seed},
        {"model", label + "/model" + suffix + ".json"},
        {"y1", label + "/y1" + suffix + ".png"},
        {"y2", label + "/y2" + suffix + ".png"},
        {"y1_range", r1},
        {"y2_range", r2},
        {"trace", label + "/trace" + suffix + ".csv"}};
    if (have_sources) {
      const QualityReport rep = evaluate_pair(
          y1, y2, s1, s2, eval.samples, eval.k,
          derive_seed(run_cfg.seed, "eval_samples"), &train_set);
      reports.push_back(rep);
      run_json["q2_db"] = {rep.comp[0].q2_db, rep.comp[1].q2_db};
    }
    runs_json.push_back(run_json);
  }

  nlohmann::json stage = {{"done", true},
                          {"seed", tc.seed},
                          {"epochs", tc.epochs},
                          {"priming_epochs", tc.priming_epochs},
                          {"train_set_size", tc.train_set_size},
                          {"runs", runs_json}};

  if (have_sources && !reports.empty()) {
    const SeriesStats st = series_stats(reports);
    stage["best"] = st.best;
    stage["worst"] = st.worst;
    // Name-tagged copies of the extremes for quick inspection.
    for (const auto& [tag, idx] : {std::pair<std::string, int>{"best", st.best},
                                   {"worst", st.worst}}) {
      const std::string suffix = "_run" + std::to_string(idx);
      for (const std::string stem : {"model", "y1", "y2"}) {
        const std::string ext = stem == "model" ? ".json" : ".png";
        fs::copy_file(dir / (stem + suffix + ext), dir / (stem + "_" + tag + ext),
                      fs::copy_options::overwrite_existing);
      }
    }
  }

  manifest["stages"][stage_label(mode)] = stage;
  save_manifest(cfg.out_dir, manifest);
}

void cmd_evaluate(const PipelineConfig& cfg) {
  nlohmann::json manifest = load_manifest(cfg.out_dir);
  require_stage(manifest, "simulate", "evaluation needs the source images");
  require_stage(manifest, "align", "evaluation needs the preprocessed pair");
  const ImageGray s1 = load_stage_image(cfg, manifest, "simulate", "s1");
  const ImageGray s2 = load_stage_image(cfg, manifest, "simulate", "s2");
  const ImageGray m1 = load_stage_image(cfg, manifest, "align", "m1_aligned");
  const ImageGray m2 = load_stage_image(cfg, manifest, "align", "m2_aligned");

  const QualityReport baseline =
      evaluate_pair(m1, m2, s1, s2, cfg.eval_samples, cfg.eval_k,
                    derive_seed(cfg.master_seed, "eval_baseline"));

  std::array<std::vector<QualityReport>, 2> mode_reports;
  std::array<int, 2> best_runs = {-1, -1};
  const std::array<FKind, 2> modes = {FKind::linear, FKind::nonlinear};
  for (int m = 0; m < 2; ++m) {
    const std::string stage = stage_label(modes[m]);
    if (!stage_done(manifest, stage)) continue;
    const nlohmann::json& runs = manifest["stages"][stage]["runs"];
    const TrainConfig tc = train_config_for(cfg, modes[m]);
    for (const auto& run : runs) {
      TrainConfig run_cfg = tc;
      run_cfg.seed = run.at("seed").get<uint64_t>();
      const PixelPairSet train_set = training_set_for(m1, m2, run_cfg);
      const ImageGray y1 =
          load_raw_image(fs::path(cfg.out_dir) / run.at("y1").get<std::string>(),
                         run.at("y1_range").get<std::array<double, 2>>());
      const ImageGray y2 =
          load_raw_image(fs::path(cfg.out_dir) / run.at("y2").get<std::string>(),
                         run.at("y2_range").get<std::array<double, 2>>());
      mode_reports[m].push_back(evaluate_pair(
          y1, y2, s1, s2, cfg.eval_samples, cfg.eval_k,
          derive_seed(run_cfg.seed, "eval_samples"), &train_set));
    }
    if (!mode_reports[m].empty())
      best_runs[m] = series_stats(mode_reports[m]).best;
  }

  const ReportTable table =
      build_report(baseline, mode_reports[0], mode_reports[1]);
  const fs::path out(cfg.out_dir);
  nlohmann::json files = nlohmann::json::object();
  if (cfg.report_csv) {
    write_text(out / "report.csv", table.to_csv());
    files["report_csv"] = "report.csv";
  }
  if (cfg.report_json) {
    write_text(out / "report.json", table.to_json().dump(2) + "\n");
    files["report_json"] = "report.json";
  }

  if (cfg.scatter) {
    const uint64_t seed = derive_seed(cfg.master_seed, "scatter");
    dump_scatter(s1, s2, cfg.eval_samples, seed, out / "scatter_sources.csv");
    dump_scatter(m1, m2, cfg.eval_samples, seed, out / "scatter_mixtures.csv");
    for (int m = 0; m < 2; ++m) {
      if (best_runs[m] < 0) continue;
      const std::string stage = stage_label(modes[m]);
      const nlohmann::json& run = manifest["stages"][stage]["runs"][best_runs[m]];
      const ImageGray y1 =
          load_raw_image(fs::path(cfg.out_dir) / run.at("y1").get<std::string>(),
                         run.at("y1_range").get<std::array<double, 2>>());
      const ImageGray y2 =
          load_raw_image(fs::path(cfg.out_dir) / run.at("y2").get<std::string>(),
                         run.at("y2_range").get<std::array<double, 2>>());
      dump_scatter(y1, y2, cfg.eval_samples, seed,
                   out / ("scatter_" + to_string(modes[m]) + ".csv"));
    }
  }

  manifest["stages"]["evaluate"] = {{"done", true}, {"files", files}};
  save_manifest(cfg.out_dir, manifest);
}

void cmd_pipeline(const PipelineConfig& cfg) {
  struct Stage {
    std::string name;
    std::function<void()> run;
  };
  const std::vector<Stage> stages = {
      {"simulate", [&] { cmd_simulate(cfg); }},
      {"align", [&] { cmd_align(cfg); }},
      {"separate_linear", [&] { cmd_separate(cfg, FKind::linear, cfg.runs); }},
      {"separate_nonlinear",
       [&] { cmd_separate(cfg, FKind::nonlinear, cfg.runs); }},
      {"evaluate", [&] { cmd_evaluate(cfg); }},
  };
  for (const Stage& stage : stages) {
    const nlohmann::json manifest = load_manifest(cfg.out_dir);
    if (stage_done(manifest, stage.name)) {
      std::printf("[pipeline] %s: already done, skipping\n", stage.name.c_str());
      continue;
    }
    std::printf("[pipeline] %s...\n", stage.name.c_str());
    std::fflush(stdout);
    try {
      stage.run();
    } catch (const std::exception& e) {
      throw std::runtime_error("pipeline stage '" + stage.name +
                               "' failed: " + e.what());
    }
  }
}

}  // namespace cli

}  // namespace showthru
