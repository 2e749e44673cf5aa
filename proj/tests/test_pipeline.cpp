// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"

#include <dovforge/pipeline.hpp>

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace dovforge;
using namespace testing;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Smallest configuration that still exercises every stage.
ExperimentConfig tiny(const std::filesystem::path &out) {
  auto cfg = config_from_json(json{{"preset", "smoke"},
                                   {"seed", 3},
                                   {"train_count", 300},
                                   {"test_count", 120},
                                   {"image_size", 16},
                                   {"detector_aux_count", 150},
                                   {"fwgen_iterations", 4},
                                   {"fwgen_batch_size", 8},
                                   {"num_probes", 20}});
  cfg.output_dir = out;
  return cfg;
}

VerifyCell cell(Scenario s, ApiMode m, const std::string &wm, bool skipped, double p) {
  VerifyCell c;
  c.scenario = s;
  c.api_mode = m;
  c.watermark = wm;
  c.skipped = skipped;
  c.report.p_value = p;
  c.report.scenario = s;
  c.report.api_mode = m;
  c.report.watermark_kind = wm;
  if (m == ApiMode::probability)
    c.report.delta_p = 0.5;
  return c;
}

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("presets") {
  for (const auto &name : preset_names()) {
    const auto cfg = preset_config(name);
    CHECK(cfg.preset == name);
    CHECK_NOTHROW(validate(cfg));
  }
  CHECK(preset_config("ablation-lb").fwgen.loss_mode == LossMode::benign);
  CHECK(preset_config("ablation-lw").fwgen.loss_mode == LossMode::marked);
  CHECK(preset_config("ablation-lbw").fwgen.loss_mode == LossMode::both);
  CHECK(preset_config("desk").train_count == 5000);
  CHECK(preset_config("desk").test_count == 1000);
  CHECK_THROWS_AS(preset_config("huge"), ConfigError);
}

TEST_CASE("flat json configuration") {
  const auto cfg = config_from_json(
      json{{"preset", "smoke"}, {"seed", 9}, {"epochs", 3}, {"loss_mode", "LW"},
           {"watermark", "cross"}, {"temperature_marked", 650}});
  CHECK(cfg.preset == "smoke");
  CHECK(cfg.seed.value == 9);
  CHECK(cfg.train.epochs == 3);
  CHECK(cfg.fwgen.loss_mode == LossMode::marked);

  const auto fw = resolved_fwgen(cfg);
  CHECK(fw.temperature_benign == 500.0);
  CHECK(fw.temperature_marked == 650.0);
  CHECK(fw.seed == derive_seed(cfg.seed, "fwgen"));
  CHECK(resolved_fwgen(preset_config("desk")).temperature_benign == 800.0);

  const auto back = config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));

  CHECK_THROWS_AS(config_from_json(json{{"epoch", 3}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"poison_rate", "lots"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"loss_mode", "L_Q"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::array()), ConfigError);
}

TEST_CASE("invalid experiments are rejected") {
  auto cfg = preset_config("smoke");
  cfg.poison_rate = 0.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = preset_config("smoke");
  cfg.target_label = cfg.num_classes;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = preset_config("smoke");
  cfg.transparency = 0.5;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = preset_config("smoke");
  cfg.dbn_filter = "oracle";
  CHECK_THROWS_AS(validate(cfg), ConfigError);
}

TEST_CASE("load_config reads a file") {
  const auto dir = scratch_dir("pipeline-config");
  std::ofstream(dir / "c.json") << R"({"preset": "smoke", "tau": 0.1})";
  CHECK(load_config(dir / "c.json").tau == 0.1);
  std::ofstream(dir / "bad.json") << "{not json";
  CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
  CHECK_THROWS(load_config(dir / "missing.json"));
}

TEST_CASE("scientific formatting") {
  CHECK(format_sci(0.0) == "0");
  CHECK(format_sci(1.0) == "1");
  CHECK(format_sci(1.23e-173) == "1.2e-173");
  CHECK(format_sci(0.99) == "9.9e-1");
  CHECK(format_sci(7.9e-4) == "7.9e-4");
  CHECK(format_sci(0.0153) == "1.5e-2");
}

TEST_CASE("rendered tables mark skipped cells") {
  ExperimentReport r;
  for (Scenario s : {Scenario::stealing, Scenario::independent})
    for (ApiMode m : {ApiMode::probability, ApiMode::label_only}) {
      r.cells.push_back(cell(s, m, "original", false, 1.2e-50));
      r.cells.push_back(cell(s, m, "forged", true, 1.0));
    }
  r.loss_mode = "LBW";
  const auto text = render_tables(r);
  CHECK(text.find("—") != std::string::npos);
  CHECK(text.find("1.2e-50") != std::string::npos);
  CHECK(render_tables(r) == text);
  CHECK_THROWS_AS(ExperimentReport{}.cell(Scenario::stealing, ApiMode::probability, "original"),
                  Error);
}

TEST_CASE("tiny experiment is reproducible and resumable") {
  const auto root = scratch_dir("pipeline-run");
  const auto a = run_experiment(tiny(root / "a"));
  const auto report_a = slurp(root / "a" / "report.json");
  CHECK(std::filesystem::exists(root / "a" / "timing.json"));
  CHECK(a.cells.size() == 8);
  for (const auto &c : a.cells)
    CHECK_FALSE(c.skipped);
  CHECK(a.poisoned == 30);

  SUBCASE("fresh run elsewhere gives the same bytes") {
    run_experiment(tiny(root / "b"), RunOptions{.fresh = true});
    CHECK(slurp(root / "b" / "report.json") == report_a);
  }
  SUBCASE("deleting a downstream artifact resumes to the same report") {
    std::filesystem::remove_all(root / "a" / "watermark" / "forged");
    std::filesystem::remove(root / "a" / "report.json");
    std::ostringstream log;
    run_experiment(tiny(root / "a"), RunOptions{.log = &log});
    CHECK(slurp(root / "a" / "report.json") == report_a);
    CHECK(log.str().find("forge") != std::string::npos);
  }
  SUBCASE("report json round trip") {
    const auto parsed = report_from_json(json::parse(report_a));
    CHECK(to_json(parsed).dump(2) + "\n" == report_a);
    CHECK_FALSE(json::parse(report_a)["config"].contains("output_dir"));
  }
  SUBCASE("disabling forging skips the forged cells") {
    auto cfg = tiny(root / "c");
    cfg.forge = false;
    const auto r = run_experiment(cfg);
    CHECK(r.cell(Scenario::stealing, ApiMode::probability, "forged").skipped);
    CHECK_FALSE(r.cell(Scenario::stealing, ApiMode::probability, "original").skipped);
    CHECK_FALSE(r.fwsr.has_value());
    CHECK(render_tables(r).find("—") != std::string::npos);
  }
}

} // TEST_SUITE
