// SPDX-License-Identifier: Apache-2.0
// dovforge: command-line front end for watermarking, training, detection,
// forgery, verification and full experiments.

#include <dovforge/detection.hpp>
#include <dovforge/dov.hpp>
#include <dovforge/fwgen.hpp>
#include <dovforge/metrics.hpp>
#include <dovforge/pipeline.hpp>
#include <dovforge/png_io.hpp>
#include <dovforge/synthetic.hpp>
#include <dovforge/training.hpp>
#include <dovforge/watermarking.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace dovforge;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;
constexpr int kExitDeterminism = 4;

/// Thrown when a determinism re-run disagrees with the first run.
struct DeterminismFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  if (!in)
    throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path &p, const std::string &text) {
  if (p.has_parent_path())
    fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out)
    throw IoError("cannot write " + p.string());
  out << text;
}

LabeledDataset load_with_exclusions(const fs::path &dir, const std::string &exclude) {
  LabeledDataset ds = load_dataset(dir);
  if (exclude.empty())
    return ds;
  // Accept either a plain index list or the flags.csv written by `detect`.
  std::string header;
  std::getline(std::ifstream(exclude), header);
  const auto drop = header.rfind("index,score", 0) == 0 ? load_scan(exclude).flagged
                                                       : load_indices(exclude);
  return ds.without(drop, ds.name() + "-filtered");
}

// ------------------------------------------------------------------ verbs --

struct SynthArgs {
  SyntheticConfig cfg;
  std::uint64_t seed = 1;
  std::string out;
};

void add_synth(CLI::App &app, SynthArgs &a) {
  auto *c = app.add_subcommand("synth", "Generate the procedural shapes dataset");
  c->add_option("--count", a.cfg.count, "Number of images")->capture_default_str();
  c->add_option("--classes", a.cfg.num_classes, "Number of classes (2-10)")->capture_default_str();
  c->add_option("--size", a.cfg.height, "Image side length")->capture_default_str();
  c->add_option("--channels", a.cfg.channels, "1 or 3")->capture_default_str();
  c->add_option("--noise", a.cfg.noise, "Pixel noise std")->capture_default_str();
  c->add_option("--name", a.cfg.name, "Dataset name")->capture_default_str();
  c->add_option("--seed", a.seed, "Seed")->capture_default_str();
  c->add_option("--out", a.out, "Output directory")->required();
  c->callback([&a] {
    a.cfg.width = a.cfg.height;
    a.cfg.seed = RngSeed{a.seed};
    save_dataset(make_synthetic_dataset(a.cfg), a.out);
  });
}

struct WatermarkArgs {
  std::string family = "cross";
  double intensity = 1.0;
  double transparency = 0.2;
  int target = 0;
  std::string like;
  std::string pattern;
  int size = 32;
  int channels = 3;
  std::uint64_t seed = 1;
  std::string out;
};

void add_watermark(CLI::App &app, WatermarkArgs &a) {
  auto *c = app.add_subcommand("watermark", "Create a BadNets or Blended watermark");
  c->add_option("--family", a.family, "cross | line | blended")
      ->check(CLI::IsMember({"cross", "line", "blended"}))
      ->capture_default_str();
  c->add_option("--intensity", a.intensity, "BadNets trigger value")->capture_default_str();
  c->add_option("--transparency", a.transparency, "Blended trigger weight in [0,0.2]")
      ->capture_default_str();
  c->add_option("--target-label", a.target, "Target label")->capture_default_str();
  c->add_option("--like", a.like, "Take the image shape from this dataset")
      ->check(CLI::ExistingDirectory);
  c->add_option("--pattern", a.pattern, "Blended pattern PNG (default: seeded noise)")
      ->check(CLI::ExistingFile);
  c->add_option("--size", a.size, "Image side when --like is absent")->capture_default_str();
  c->add_option("--channels", a.channels, "Channels when --like is absent")->capture_default_str();
  c->add_option("--seed", a.seed, "Seed for the noise pattern")->capture_default_str();
  c->add_option("--out", a.out, "Output directory")->required();
  c->callback([&a] {
    Shape shape{a.channels, a.size, a.size};
    if (!a.like.empty())
      shape = load_dataset(a.like).image_shape();
    Watermark wm;
    if (a.family == "blended") {
      ImageTensor pat;
      if (!a.pattern.empty()) {
        pat = read_png(a.pattern);
      } else {
        Rng rng(derive_seed(RngSeed{a.seed}, "blended-pattern"));
        Tensor t(shape);
        for (double &v : t.values())
          v = rng.uniform();
        pat = ImageTensor(std::move(t)).quantized();
      }
      wm = make_blended_watermark(pat, a.transparency, a.target);
    } else {
      wm = make_badnets_watermark(
          shape, a.family == "cross" ? BadnetsVariant::cross : BadnetsVariant::line,
          a.intensity, a.target);
    }
    save_watermark(wm, a.out);
  });
}

struct EmbedArgs {
  std::string dataset, watermark, out;
  double rate = 0.1;
  int target = 0;
  bool relabel = true;
  std::uint64_t seed = 1;
};

void add_embed(CLI::App &app, EmbedArgs &a) {
  auto *c = app.add_subcommand("embed", "Watermark a fraction of a dataset");
  c->add_option("--dataset", a.dataset)->required()->check(CLI::ExistingDirectory);
  c->add_option("--watermark", a.watermark)->required()->check(CLI::ExistingDirectory);
  c->add_option("--rate", a.rate, "Poison rate gamma")->capture_default_str();
  c->add_option("--target-label", a.target)->capture_default_str();
  c->add_flag("--relabel,!--no-relabel", a.relabel, "Relabel watermarked samples");
  c->add_option("--seed", a.seed)->capture_default_str();
  c->add_option("--out", a.out)->required();
  c->callback([&a] {
    const auto res = poison_dataset(load_dataset(a.dataset), load_watermark(a.watermark),
                                    {a.rate, a.target, a.relabel, RngSeed{a.seed}});
    save_dataset(res.dataset, a.out);
    save_indices(res.poisoned_indices, fs::path(a.out) / "poisoned_indices.csv");
  });
}

struct TrainArgs {
  std::string dataset, arch = "small_cnn", optimizer = "adamw", exclude, out;
  TrainConfig cfg;
  std::uint64_t seed = 1;
};

void add_train(CLI::App &app, TrainArgs &a) {
  auto *c = app.add_subcommand("train", "Train a classifier");
  c->add_option("--dataset", a.dataset)->required()->check(CLI::ExistingDirectory);
  c->add_option("--arch", a.arch, "small_cnn | mlp")->capture_default_str();
  c->add_option("--epochs", a.cfg.epochs)->capture_default_str();
  c->add_option("--batch", a.cfg.batch_size)->capture_default_str();
  c->add_option("--lr", a.cfg.learning_rate)->capture_default_str();
  c->add_option("--optimizer", a.optimizer, "adamw | sgd")->capture_default_str();
  c->add_option("--weight-decay", a.cfg.weight_decay)->capture_default_str();
  c->add_option("--exclude", a.exclude, "Index file or flags.csv of samples to drop")
      ->check(CLI::ExistingFile);
  c->add_option("--seed", a.seed)->capture_default_str();
  c->add_option("--out", a.out, "Model file")->required();
  c->callback([&a] {
    a.cfg.architecture = architecture_from_string(a.arch);
    a.cfg.optimizer = nn::optimizer_kind_from_string(a.optimizer);
    a.cfg.seed = RngSeed{a.seed};
    const auto ds = load_with_exclusions(a.dataset, a.exclude);
    TrainLog log;
    const auto model = train_classifier(ds, a.cfg, &log);
    if (fs::path(a.out).has_parent_path())
      fs::create_directories(fs::path(a.out).parent_path());
    save_model(model, a.out);
    write_model_sidecar(a.out, a.cfg, a.dataset);
    for (std::size_t e = 0; e < log.epoch_loss.size(); ++e)
      std::printf("epoch %zu loss %.6f\n", e + 1, log.epoch_loss[e]);
  });
}

struct DetectArgs {
  std::string dataset, out, detector, save_detector;
  DetectorConfig cfg;
  std::size_t aux_count = 2000;
  std::uint64_t seed = 1;
};

void add_detect(CLI::App &app, DetectArgs &a) {
  auto *c = app.add_subcommand("detect", "Flag watermarked samples by their DCT spectrum");
  c->add_option("--dataset", a.dataset)->required()->check(CLI::ExistingDirectory);
  c->add_option("--detector", a.detector, "Use a saved detector instead of training one")
      ->check(CLI::ExistingDirectory);
  c->add_option("--save-detector", a.save_detector, "Save the trained detector here");
  c->add_option("--aux-count", a.aux_count, "Clean auxiliary images for training")
      ->capture_default_str();
  c->add_option("--epochs", a.cfg.epochs)->capture_default_str();
  c->add_option("--threshold", a.cfg.threshold)->capture_default_str();
  c->add_option("--seed", a.seed)->capture_default_str();
  c->add_option("--out", a.out, "flags.csv")->required();
  c->callback([&a] {
    const auto ds = load_dataset(a.dataset);
    FrequencyDetector det;
    if (!a.detector.empty()) {
      det = load_detector(a.detector);
    } else {
      const Shape s = ds.image_shape();
      SyntheticConfig sc{a.aux_count, s.channels, s.height, s.width,
                         std::clamp(ds.num_classes(), 2, 10), 0.02,
                         derive_seed(RngSeed{a.seed}, "aux-data"), "aux"};
      a.cfg.seed = derive_seed(RngSeed{a.seed}, "detector");
      det = train_detector(make_synthetic_dataset(sc), {}, a.cfg);
      if (!a.save_detector.empty())
        save_detector(det, a.save_detector);
    }
    const auto scan = scan_dataset(det, ds);
    save_scan(scan, a.out);
    std::printf("flagged %zu of %zu\n", scan.flagged.size(), ds.size());
  });
}

struct ForgeArgs {
  std::string benign, marked, dataset, watermark, exclude, loss = "LBW", out;
  FWGenConfig cfg;
  std::uint64_t seed = 1;
};

void add_forge(CLI::App &app, ForgeArgs &a) {
  auto *c = app.add_subcommand("forge", "Train FW-Gen and emit a forged watermark");
  c->add_option("--benign-model", a.benign)->required()->check(CLI::ExistingFile);
  c->add_option("--marked-model", a.marked)->required()->check(CLI::ExistingFile);
  c->add_option("--dataset", a.dataset, "Benign data")->required()->check(CLI::ExistingDirectory);
  c->add_option("--exclude", a.exclude, "Index file or flags.csv of samples to drop")
      ->check(CLI::ExistingFile);
  c->add_option("--watermark", a.watermark, "Original watermark")
      ->required()
      ->check(CLI::ExistingDirectory);
  c->add_option("--alpha", a.cfg.alpha)->capture_default_str();
  c->add_option("--temp", a.cfg.temperature_benign)->capture_default_str();
  c->add_option("--temp-marked", a.cfg.temperature_marked)->capture_default_str();
  c->add_option("--lr", a.cfg.learning_rate)->capture_default_str();
  c->add_option("--iters", a.cfg.iterations)->capture_default_str();
  c->add_option("--batch", a.cfg.batch_size)->capture_default_str();
  c->add_option("--loss", a.loss, "LB | LW | LBW")->capture_default_str();
  c->add_option("--output-gain", a.cfg.arch.output_gain)->capture_default_str();
  c->add_option("--seed", a.seed)->capture_default_str();
  c->add_option("--out", a.out)->required();
  c->callback([&a] {
    a.cfg.loss_mode = loss_mode_from_string(a.loss);
    a.cfg.seed = RngSeed{a.seed};
    validate(a.cfg);
    const auto res =
        train_fwgen(load_model(a.benign), load_model(a.marked),
                    load_with_exclusions(a.dataset, a.exclude), load_watermark(a.watermark), a.cfg);
    save_watermark(res.forged, a.out);
    std::ostringstream os;
    os << "iteration,l_benign,l_marked,l_total\n";
    char buf[128];
    for (std::size_t i = 0; i < res.trace.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", i, res.trace[i].l_benign,
                    res.trace[i].l_marked, res.trace[i].l_total);
      os << buf;
    }
    write_file(fs::path(a.out) / "loss_trace.csv", os.str());
  });
}

struct VerifyArgs {
  std::string model, dataset, watermark, mode = "probability", scenario = "stealing", out;
  VerifyConfig cfg;
  std::uint64_t seed = 1;
};

void add_verify(CLI::App &app, VerifyArgs &a) {
  auto *c = app.add_subcommand("verify", "Test a suspicious model for the watermark");
  c->add_option("--model", a.model)->required()->check(CLI::ExistingFile);
  c->add_option("--dataset", a.dataset, "Held-out probe data")
      ->required()
      ->check(CLI::ExistingDirectory);
  c->add_option("--watermark", a.watermark)->required()->check(CLI::ExistingDirectory);
  c->add_option("--mode", a.mode, "probability | label")->capture_default_str();
  c->add_option("--scenario", a.scenario, "stealing | independent")->capture_default_str();
  c->add_option("--tau", a.cfg.tau)->capture_default_str();
  c->add_option("--alpha", a.cfg.significance, "Significance level")->capture_default_str();
  c->add_option("--n", a.cfg.num_probes, "Number of probes")->capture_default_str();
  c->add_option("--seed", a.seed)->capture_default_str();
  c->add_option("--out", a.out, "report.json (stdout when absent)");
  c->callback([&a] {
    a.cfg.api_mode = api_mode_from_string(a.mode);
    a.cfg.scenario = scenario_from_string(a.scenario);
    a.cfg.seed = RngSeed{a.seed};
    validate(a.cfg);
    const auto rep =
        verify(load_model(a.model), load_dataset(a.dataset), load_watermark(a.watermark), a.cfg);
    const std::string text = to_json(rep).dump(2) + "\n";
    if (a.out.empty())
      std::cout << text;
    else
      write_file(a.out, text);
  });
}

// A quality operand: a dataset directory (one image per row) or a
// watermark directory (its pattern, one row).
std::vector<ImageTensor> images_of(const fs::path &dir) {
  std::vector<ImageTensor> out;
  if (fs::exists(dir / "index.csv")) {
    for (const auto &s : load_dataset(dir).items())
      out.push_back(s.image);
  } else if (fs::exists(dir / "pattern.png")) {
    out.push_back(load_watermark(dir).pattern());
  } else {
    throw ConfigError(dir.string() + " is neither a dataset nor a watermark directory");
  }
  return out;
}

struct QualityArgs {
  std::string a, b, out;
};

void add_quality(CLI::App &app, QualityArgs &a) {
  auto *c = app.add_subcommand("quality", "MSE, PSNR and SSIM between paired images");
  c->add_option("--a", a.a)->required()->check(CLI::ExistingDirectory);
  c->add_option("--b", a.b)->required()->check(CLI::ExistingDirectory);
  c->add_option("--out", a.out, "quality.csv (stdout when absent)");
  c->callback([&a] {
    const auto xs = images_of(a.a), ys = images_of(a.b);
    if (xs.size() != ys.size())
      throw ConfigError("operands hold different numbers of images");
    std::ostringstream os;
    os << "index,mse,psnr,ssim\n";
    char buf[128];
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto q = quality(xs[i], ys[i]);
      std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g\n", i, q.mse, q.psnr, q.ssim);
      os << buf;
    }
    if (a.out.empty())
      std::cout << os.str();
    else
      write_file(a.out, os.str());
  });
}

struct WsrArgs {
  std::string model, dataset, watermark;
};

void add_wsr(CLI::App &app, WsrArgs &a) {
  auto *c = app.add_subcommand("wsr", "Watermark success rate on a probe set");
  c->add_option("--model", a.model)->required()->check(CLI::ExistingFile);
  c->add_option("--dataset", a.dataset)->required()->check(CLI::ExistingDirectory);
  c->add_option("--watermark", a.watermark)->required()->check(CLI::ExistingDirectory);
  c->callback([&a] {
    std::printf("%.6f\n",
                wsr(load_model(a.model), load_dataset(a.dataset), load_watermark(a.watermark)));
  });
}

struct BwdrArgs {
  std::string flags, truth;
};

void add_bwdr(CLI::App &app, BwdrArgs &a) {
  auto *c = app.add_subcommand("bwdr", "Detection rate of flagged samples");
  c->add_option("--flags", a.flags, "flags.csv from detect")->required()->check(CLI::ExistingFile);
  c->add_option("--truth", a.truth, "poisoned_indices.csv")->required()->check(CLI::ExistingFile);
  c->callback([&a] {
    const auto scan = load_scan(a.flags);
    const auto truth = load_indices(a.truth);
    std::printf("bwdr %.6f\nfalse_flag_rate %.6f\n", bwdr(scan.flagged, truth),
                false_flag_rate(scan.flagged, truth, scan.scores.size()));
  });
}

struct RunArgs {
  std::string config, preset, out;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool fresh = false, verify_determinism = false, quiet = false;
};

json parse_override(const std::string &text) {
  try {
    return json::parse(text);
  } catch (const json::exception &) {
    return text; // bare strings need no quotes
  }
}

void add_run(CLI::App &app, RunArgs &a) {
  auto *c = app.add_subcommand("run", "Run the full experiment pipeline");
  c->add_option("--config", a.config, "Flat JSON config")->check(CLI::ExistingFile);
  c->add_option("--preset", a.preset, "Base preset (desk, paper, smoke, ablation-lb, ...)");
  c->add_option("--set", a.sets, "Override a config key: key=value")->allow_extra_args(false);
  c->add_option("--seed", a.seed, "Master seed");
  c->add_option("--out", a.out, "Output directory");
  c->add_flag("--fresh", a.fresh, "Recompute every stage");
  c->add_flag("--verify-determinism", a.verify_determinism,
              "Re-run from scratch and require a byte-identical report");
  c->add_flag("--quiet", a.quiet, "No progress lines");
  c->callback([&a, c] {
    json j = json::object();
    if (!a.config.empty()) {
      std::ifstream in(a.config);
      try {
        j = json::parse(in);
      } catch (const json::exception &e) {
        throw ConfigError("malformed config: " + std::string(e.what()));
      }
    }
    if (!a.preset.empty())
      j["preset"] = a.preset;
    for (const auto &s : a.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set expects key=value, got '" + s + "'");
      j[s.substr(0, eq)] = parse_override(s.substr(eq + 1));
    }
    if (c->count("--seed"))
      j["seed"] = a.seed;
    if (!a.out.empty())
      j["output_dir"] = a.out;
    const ExperimentConfig cfg = config_from_json(j);
    RunOptions opts{a.fresh, a.quiet ? nullptr : &std::cerr};
    const auto rep = run_experiment(cfg, opts);
    std::cout << render_tables(rep);
    if (a.verify_determinism) {
      ExperimentConfig again = cfg;
      again.output_dir = cfg.output_dir / "determinism-rerun";
      run_experiment(again, {true, opts.log});
      if (read_file(cfg.output_dir / "report.json") != read_file(again.output_dir / "report.json"))
        throw DeterminismFailure("report.json differs between two runs of the same config");
      std::cout << "determinism check passed\n";
    }
  });
}

struct RenderArgs {
  std::string report, out;
};

void add_render(CLI::App &app, RenderArgs &a) {
  auto *c = app.add_subcommand("render", "Render report.json as text tables");
  c->add_option("--report", a.report)->required()->check(CLI::ExistingFile);
  c->add_option("--out", a.out, "Text file (stdout when absent)");
  c->callback([&a] {
    json j;
    try {
      j = json::parse(read_file(a.report));
    } catch (const json::exception &e) {
      throw ConfigError("malformed report: " + std::string(e.what()));
    }
    const std::string text = render_tables(report_from_json(j));
    if (a.out.empty())
      std::cout << text;
    else
      write_file(a.out, text);
  });
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"dovforge: backdoor-watermark ownership verification and forgery toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  WatermarkArgs watermark;
  EmbedArgs embed_args;
  TrainArgs train;
  DetectArgs detect;
  ForgeArgs forge;
  VerifyArgs verify_args;
  QualityArgs quality_args;
  WsrArgs wsr_args;
  BwdrArgs bwdr_args;
  RunArgs run;
  RenderArgs render;
  add_synth(app, synth);
  add_watermark(app, watermark);
  add_embed(app, embed_args);
  add_train(app, train);
  add_detect(app, detect);
  add_forge(app, forge);
  add_verify(app, verify_args);
  add_quality(app, quality_args);
  add_wsr(app, wsr_args);
  add_bwdr(app, bwdr_args);
  add_run(app, run);
  add_render(app, render);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitConfig;
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DeterminismFailure &e) {
    std::cerr << "determinism failure: " << e.what() << "\n";
    return kExitDeterminism;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
  return 0;
}
