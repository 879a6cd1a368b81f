#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "showthru/align.hpp"
#include "showthru/config.hpp"
#include "showthru/pipeline.hpp"
#include "showthru/rng.hpp"
#include "support.hpp"

using namespace showthru;
using testsupport::TempDir;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

// small-but-real pipeline configuration on the default bar sources, whose
// edges give the cross-mixture alignment signal everywhere
PipelineConfig tiny_config(const TempDir& dir, const std::string& out_name) {
  PipelineConfig cfg;
  cfg.out_dir = dir.file(out_name);
  cfg.master_seed = 7;
  cfg.sim_size = 100;
  cfg.align_block_size = 20;
  cfg.align_search_radius = 8;
  cfg.epochs_linear = 30;
  cfg.epochs_nonlinear = 50;
  cfg.priming_epochs = 20;
  cfg.train_set_size = 500;
  cfg.runs = 2;
  cfg.eval_samples = 800;
  cfg.scatter = true;
  return cfg;
}

}  // namespace

TEST_CASE("key-value config parsing") {
  const KeyValueConfig kv = KeyValueConfig::parse_string(
      "# comment\n"
      "seed = 99\n"
      "mix.q = 0.5   # trailing comment\n"
      "eval.scatter = true\n"
      "paths.source1 = /tmp/a.png\n"
      "\n");
  CHECK(kv.get_u64("seed", 0) == 99);
  CHECK(kv.get_double("mix.q", 0.0) == 0.5);
  CHECK(kv.get_bool("eval.scatter", false));
  CHECK(kv.get_string("paths.source1", "") == "/tmp/a.png");
  CHECK(kv.get_int("missing", 17) == 17);

  SUBCASE("bad values are rejected") {
    CHECK_THROWS(KeyValueConfig::parse_string("seed 99\n"));
    const KeyValueConfig bad = KeyValueConfig::parse_string("mix.q = abc\n");
    CHECK_THROWS(bad.get_double("mix.q", 0.0));
  }

  SUBCASE("unknown keys are rejected when building a pipeline config") {
    CHECK_THROWS_WITH_AS(
        PipelineConfig::from_config(
            KeyValueConfig::parse_string("mix.quality = 1\n")),
        doctest::Contains("unknown config key"), std::runtime_error);
  }

  SUBCASE("pipeline config picks up every section") {
    const PipelineConfig cfg = PipelineConfig::from_config(
        KeyValueConfig::parse_string("seed = 4\n"
                                     "sim.size = 123\n"
                                     "mix.gamma = 3.5\n"
                                     "align.search_radius = 9\n"
                                     "train.runs = 3\n"
                                     "eval.k = 4\n"));
    CHECK(cfg.master_seed == 4);
    CHECK(cfg.sim_size == 123);
    CHECK(cfg.mix_gamma == 3.5);
    CHECK(cfg.align_search_radius == 9);
    CHECK(cfg.runs == 3);
    CHECK(cfg.eval_k == 4);
  }
}

TEST_CASE("seed fan-out is stable and label-separated") {
  CHECK(derive_seed(42, "train_samples") == 5213585255057656211ULL);
  CHECK(derive_seed(42, "train_samples") == derive_seed(42, "train_samples"));
  CHECK(derive_seed(42, "train_samples") != derive_seed(42, "f_init"));
  CHECK(derive_seed(42, "train_samples") != derive_seed(43, "train_samples"));
}

TEST_CASE("display_normalize saturates exactly 1% of pixels at each end") {
  // 10000 distinct values in randomized order
  Rng rng(55);
  std::vector<double> values(10000);
  for (size_t i = 0; i < values.size(); ++i)
    values[i] = (double(i) + 0.5) / values.size();
  for (size_t i = values.size() - 1; i > 0; --i)
    std::swap(values[i], values[rng.below(i + 1)]);
  ImageGray img(100, 100);
  img.data = values;

  const ImageGray out = display_normalize(img);
  int at_zero = 0, at_one = 0;
  for (double v : out.data) {
    if (v == 0.0) ++at_zero;
    if (v == 1.0) ++at_one;
  }
  CHECK(at_zero == 100);
  CHECK(at_one == 100);

  SUBCASE("metrics must never see display-normalized data") {
    // the stretch is not the identity on this image
    CHECK(out.data != img.data);
  }
}

TEST_CASE("cmd_simulate writes a deterministic source/mixture set") {
  TempDir dir("cli_simulate");
  PipelineConfig cfg;
  cfg.out_dir = dir.file("out_a");
  cfg.master_seed = 11;
  cfg.sim_size = 100;
  cfg.sim_bars = 25;
  cli::cmd_simulate(cfg);

  for (const char* name : {"s1.png", "s2.png", "m1.png", "m2.png",
                           "manifest.json"})
    CHECK(fs::exists(fs::path(cfg.out_dir) / name));

  SUBCASE("same seed gives byte-identical images") {
    PipelineConfig cfg_b = cfg;
    cfg_b.out_dir = dir.file("out_b");
    cli::cmd_simulate(cfg_b);
    for (const char* name : {"s1.png", "s2.png", "m1.png", "m2.png"})
      CHECK(read_file(fs::path(cfg.out_dir) / name) ==
            read_file(fs::path(cfg_b.out_dir) / name));
  }

  SUBCASE("bars histogram contract") {
    const ImageGray s1 =
        load_grayscale((fs::path(cfg.out_dir) / "s1.png").string());
    std::map<double, int> hist;
    for (double v : s1.data) ++hist[v];
    CHECK(hist.size() == 25);
    for (const auto& [level, count] : hist) CHECK(count == 100 * 100 / 25);
  }

  SUBCASE("manifest records the stage") {
    const nlohmann::json manifest = load_manifest(cfg.out_dir);
    CHECK(manifest.at("stages").at("simulate").at("done") == true);
    CHECK(manifest.at("stages").at("simulate").at("mix").at("q") == 0.6);
  }
}

TEST_CASE("pipeline commands chain end to end") {
  TempDir dir("cli_pipeline");
  const PipelineConfig cfg = tiny_config(dir, "out");
  cli::cmd_pipeline(cfg);
  const fs::path out(cfg.out_dir);

  SUBCASE("align produced a near-zero displacement field") {
    const DisplacementField field = DisplacementField::from_json(
        nlohmann::json::parse(read_file(out / "displacement_field.json")));
    int over_quarter = 0;
    for (const auto& cell : field.cells) {
      CHECK(std::abs(cell.dx) <= 2);
      CHECK(std::abs(cell.dy) <= 2);
      if (std::abs(cell.dx) > 1 || std::abs(cell.dy) > 1) ++over_quarter;
    }
    CHECK(over_quarter <= int(field.cells.size()) / 10);
  }

  SUBCASE("separate wrote per-run artifacts and best/worst tags") {
    for (const std::string mode : {"linear", "nonlinear"}) {
      for (int run = 0; run < cfg.runs; ++run) {
        const std::string suffix = "_run" + std::to_string(run);
        CHECK(fs::exists(out / mode / ("model" + suffix + ".json")));
        CHECK(fs::exists(out / mode / ("y1" + suffix + ".png")));
        CHECK(fs::exists(out / mode / ("y1" + suffix + "_display.png")));
        const std::string trace =
            read_file(out / mode / ("trace" + suffix + ".csv"));
        CHECK(trace.rfind("epoch,objective\n", 0) == 0);
        const int expected_epochs =
            mode == "linear" ? cfg.epochs_linear : cfg.epochs_nonlinear;
        CHECK(count_lines(trace) == expected_epochs + 1);
      }
      CHECK(fs::exists(out / mode / "model_best.json"));
      CHECK(fs::exists(out / mode / "y1_worst.png"));
    }
  }

  SUBCASE("priming left the early nonlinear epochs exactly linear") {
    const nlohmann::json manifest = load_manifest(cfg.out_dir);
    const auto& run0 =
        manifest.at("stages").at("separate_nonlinear").at("runs")[0];
    const nlohmann::json model_doc = nlohmann::json::parse(
        read_file(out / run0.at("model").get<std::string>()));
    const SeparatorModel model = deserialize_model(model_doc);
    CHECK(model.kind == FKind::nonlinear);
    // after full training the hidden-output weights have moved off zero
    double max_u = 0.0;
    for (double u : model.nl.u) max_u = std::max(max_u, std::fabs(u));
    CHECK(max_u > 0.0);
  }

  SUBCASE("reports recomputed from reloaded raw images match the in-memory "
          "run scores") {
    const nlohmann::json manifest = load_manifest(cfg.out_dir);
    const nlohmann::json report =
        nlohmann::json::parse(read_file(out / "report.json"));
    // mean of the manifest per-run q2 values, component 1
    double manifest_mean = 0.0;
    const auto& runs = manifest.at("stages").at("separate_linear").at("runs");
    for (const auto& run : runs)
      manifest_mean += run.at("q2_db")[0].get<double>();
    manifest_mean /= double(runs.size());
    double report_mean = 0.0;
    bool found = false;
    for (const auto& row : report.at("rows"))
      if (row.at("method") == "linear" && row.at("component") == 1 &&
          row.at("stat") == "mean") {
        report_mean = row.at("q2_db").get<double>();
        found = true;
      }
    REQUIRE(found);
    // 16-bit quantization of the persisted raw components costs a hair
    CHECK(std::fabs(report_mean - manifest_mean) < 0.05);
  }

  SUBCASE("evaluate wrote reports with all three method groups") {
    const std::string csv = read_file(out / "report.csv");
    CHECK(csv.find("baseline,1,mean") != std::string::npos);
    CHECK(csv.find("linear,1,mean") != std::string::npos);
    CHECK(csv.find("nonlinear,2,best") != std::string::npos);

    const nlohmann::json report =
        nlohmann::json::parse(read_file(out / "report.json"));
    CHECK(report.at("rows").size() == 2 + 6 + 6);
  }

  SUBCASE("scatter dumps have one row per sample") {
    for (const char* name : {"scatter_sources.csv", "scatter_mixtures.csv",
                             "scatter_linear.csv", "scatter_nonlinear.csv"}) {
      const std::string text = read_file(out / name);
      CHECK(count_lines(text) == cfg.eval_samples + 1);
      CHECK(text.rfind("x1,x2\n", 0) == 0);
    }
  }

  SUBCASE("a second pipeline run resumes without recomputing") {
    const auto mtime_before = fs::last_write_time(out / "m1.png");
    const std::string report_before = read_file(out / "report.json");
    cli::cmd_pipeline(cfg);
    CHECK(fs::last_write_time(out / "m1.png") == mtime_before);
    CHECK(read_file(out / "report.json") == report_before);
  }

  SUBCASE("a fresh run with the same master seed reproduces the report") {
    PipelineConfig cfg_b = cfg;
    cfg_b.out_dir = dir.file("out_b");
    cli::cmd_pipeline(cfg_b);
    CHECK(read_file(out / "report.json") ==
          read_file(fs::path(cfg_b.out_dir) / "report.json"));
  }
}

TEST_CASE("separate before align fails with a clear message") {
  TempDir dir("cli_order");
  PipelineConfig cfg;
  cfg.out_dir = dir.file("out");
  CHECK_THROWS_WITH_AS(cli::cmd_separate(cfg, FKind::linear, 1),
                       doctest::Contains("align"), std::runtime_error);
  CHECK_THROWS_WITH_AS(cli::cmd_align(cfg), doctest::Contains("simulate"),
                       std::runtime_error);
}

TEST_CASE("align rejects mismatched acquired images") {
  TempDir dir("cli_align_err");
  save_grayscale(testsupport::smooth_image(50, 50, 1), dir.file("a.png"));
  save_grayscale(testsupport::smooth_image(40, 40, 2), dir.file("b.png"));
  PipelineConfig cfg;
  cfg.out_dir = dir.file("out");
  cfg.acquired1_path = dir.file("a.png");
  cfg.acquired2_path = dir.file("b.png");
  CHECK_THROWS_WITH_AS(cli::cmd_align(cfg), doctest::Contains("differ"),
                       std::runtime_error);
}

TEST_CASE("cmd_simulate accepts external source images") {
  TempDir dir("cli_external");
  const ImageGray s1 = testsupport::smooth_image(60, 60, 2001);
  const ImageGray s2 = testsupport::smooth_image(60, 60, 2002);
  save_grayscale(s1, dir.file("src1.png"), 16);
  save_grayscale(s2, dir.file("src2.png"), 16);

  PipelineConfig cfg;
  cfg.out_dir = dir.file("out");
  cfg.source1_path = dir.file("src1.png");
  cfg.source2_path = dir.file("src2.png");
  cli::cmd_simulate(cfg);

  const ImageGray stored =
      load_grayscale((fs::path(cfg.out_dir) / "s1.png").string());
  REQUIRE(stored.same_size(s1));
  for (size_t i = 0; i < s1.data.size(); ++i)
    CHECK(std::fabs(stored.data[i] - s1.data[i]) <= 2.0 / 65535.0);

  SUBCASE("one external path alone is an error") {
    PipelineConfig bad = cfg;
    bad.out_dir = dir.file("out2");
    bad.source2_path.clear();
    CHECK_THROWS(cli::cmd_simulate(bad));
  }
}
