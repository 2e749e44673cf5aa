// SPDX-License-Identifier: Apache-2.0
#include <dovforge/detection.hpp>
#include <dovforge/pipeline.hpp>
#include <dovforge/synthetic.hpp>
#include <dovforge/watermarking.hpp>

#include <cerrno>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace dovforge {

namespace {

constexpr const char *kFormatTag = "dovforge-pipeline-1";

// ---------------------------------------------------------------- config --

using Setter = std::function<void(ExperimentConfig &, const json &)>;

template <class T> T get_as(const json &v, const std::string &key) {
  try {
    return v.get<T>();
  } catch (const json::exception &) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

const std::map<std::string, Setter> &setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
#define DOV_KEY(name, type, field)                                            \
  t[name] = [](ExperimentConfig &c, const json &v) { c.field = get_as<type>(v, name); }
    DOV_KEY("output_dir", std::string, output_dir);
    DOV_KEY("dataset", std::string, dataset);
    DOV_KEY("test_dataset", std::string, test_dataset);
    DOV_KEY("train_count", std::size_t, train_count);
    DOV_KEY("test_count", std::size_t, test_count);
    DOV_KEY("image_size", int, image_size);
    DOV_KEY("channels", int, channels);
    DOV_KEY("num_classes", int, num_classes);
    DOV_KEY("synthetic_noise", double, synthetic_noise);
    DOV_KEY("watermark", std::string, watermark);
    DOV_KEY("intensity", double, intensity);
    DOV_KEY("transparency", double, transparency);
    DOV_KEY("target_label", int, target_label);
    DOV_KEY("poison_rate", double, poison_rate);
    DOV_KEY("relabel", bool, relabel);
    DOV_KEY("epochs", int, train.epochs);
    DOV_KEY("batch_size", int, train.batch_size);
    DOV_KEY("learning_rate", double, train.learning_rate);
    DOV_KEY("weight_decay", double, train.weight_decay);
    DOV_KEY("detection", bool, detection);
    DOV_KEY("dbn_filter", std::string, dbn_filter);
    DOV_KEY("detector_aux_count", std::size_t, detector_aux_count);
    DOV_KEY("detector_epochs", int, detector_epochs);
    DOV_KEY("detector_threshold", double, detector_threshold);
    DOV_KEY("independent_model", std::string, independent_model);
    DOV_KEY("forge", bool, forge);
    DOV_KEY("alpha", double, fwgen.alpha);
    DOV_KEY("fwgen_learning_rate", double, fwgen.learning_rate);
    DOV_KEY("fwgen_iterations", int, fwgen.iterations);
    DOV_KEY("fwgen_batch_size", int, fwgen.batch_size);
    DOV_KEY("resample_noise", bool, fwgen.resample_noise);
    DOV_KEY("generator_width", int, fwgen.arch.width);
    DOV_KEY("generator_latent_channels", int, fwgen.arch.latent_channels);
    DOV_KEY("generator_output_gain", double, fwgen.arch.output_gain);
    DOV_KEY("tau", double, tau);
    DOV_KEY("significance", double, significance);
    DOV_KEY("num_probes", int, num_probes);
#undef DOV_KEY
    t["seed"] = [](ExperimentConfig &c, const json &v) {
      c.seed = RngSeed{get_as<std::uint64_t>(v, "seed")};
    };
    t["optimizer"] = [](ExperimentConfig &c, const json &v) {
      c.train.optimizer = nn::optimizer_kind_from_string(get_as<std::string>(v, "optimizer"));
    };
    t["architecture"] = [](ExperimentConfig &c, const json &v) {
      c.train.architecture = architecture_from_string(get_as<std::string>(v, "architecture"));
    };
    t["loss_mode"] = [](ExperimentConfig &c, const json &v) {
      c.fwgen.loss_mode = loss_mode_from_string(get_as<std::string>(v, "loss_mode"));
    };
    for (const char *key : {"temperature_benign", "temperature_marked"})
      t[key] = [key](ExperimentConfig &c, const json &v) {
        auto &slot = std::string(key) == "temperature_benign" ? c.temperature_benign
                                                              : c.temperature_marked;
        slot = v.is_null() ? std::nullopt
                           : std::optional<double>(get_as<double>(v, key));
      };
    return t;
  }();
  return table;
}

ExperimentConfig with_loss(std::string name, LossMode mode) {
  ExperimentConfig c;
  c.preset = std::move(name);
  c.fwgen.loss_mode = mode;
  return c;
}

// --------------------------------------------------------------- helpers --

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_text(const fs::path &file, const std::string &text) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out)
    throw IoError("cannot write " + file.string());
  out << text;
  if (!out)
    throw IoError("short write to " + file.string());
}

json read_json(const fs::path &file) {
  std::ifstream in(file);
  if (!in)
    throw IoError("cannot read " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception &e) {
    throw IoError("malformed JSON in " + file.string() + ": " + e.what());
  }
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void save_trace(const std::vector<LossBreakdown> &trace, const fs::path &file) {
  std::ostringstream os;
  os << "iteration,l_benign,l_marked,l_total\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    os << i << ',' << g17(trace[i].l_benign) << ',' << g17(trace[i].l_marked) << ','
       << g17(trace[i].l_total) << '\n';
  write_text(file, os.str());
}

std::vector<LossBreakdown> load_trace(const fs::path &file) {
  std::ifstream in(file);
  if (!in)
    throw IoError("cannot read " + file.string());
  std::vector<LossBreakdown> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    LossBreakdown lb;
    char comma;
    std::size_t it;
    std::istringstream ss(line);
    if (!(ss >> it >> comma >> lb.l_benign >> comma >> lb.l_marked >> comma >> lb.l_total))
      throw IoError("malformed loss trace row: " + line);
    out.push_back(lb);
  }
  return out;
}

// Exclusive per-directory lock holding the owner's pid; a lock left by a
// dead process is taken over.
class DirLock {
public:
  explicit DirLock(const fs::path &dir) : file_(dir / ".lock") {
    for (int attempt = 0; attempt < 2; ++attempt) {
      const int fd = ::open(file_.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
      if (fd >= 0) {
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
        return;
      }
      if (errno != EEXIST)
        throw IoError("cannot create lock " + file_.string());
      long owner = 0;
      std::ifstream(file_) >> owner;
      if (owner > 0 && (::kill(static_cast<pid_t>(owner), 0) == 0 || errno != ESRCH))
        throw ConfigError("output directory is locked by process " +
                          std::to_string(owner) + " (" + file_.string() + ")");
      fs::remove(file_);
    }
    throw ConfigError("cannot acquire lock " + file_.string());
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(file_, ec);
  }
  DirLock(const DirLock &) = delete;
  DirLock &operator=(const DirLock &) = delete;

private:
  fs::path file_;
};

// Runs stages in order. A stage's key chains the previous key with the
// stage's own parameters, so any upstream change invalidates it.
class StageRunner {
public:
  StageRunner(fs::path out, bool fresh, std::ostream *log,
              std::map<std::string, double> &timing)
      : out_(std::move(out)), fresh_(fresh), log_(log), timing_(timing) {}

  void run(const std::string &name, const json &params,
           const std::vector<fs::path> &artifacts, const std::function<void()> &compute,
           const std::function<void()> &load) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string key = hex64(fnv1a(key_ + "|" + name + "|" + params.dump()));
    const fs::path marker = out_ / "stages" / (name + ".json");
    try {
      bool reuse = !fresh_ && fs::exists(marker);
      if (reuse)
        reuse = read_json(marker).value("key", "") == key;
      for (const auto &a : artifacts)
        reuse = reuse && fs::exists(out_ / a);
      if (reuse) {
        say(name + ": reusing persisted artifacts");
      } else {
        say(name + ": running");
        fs::remove(marker);
        compute();
        write_text(marker, json{{"key", key}, {"params", params}}.dump(2) + "\n");
      }
      load();
    } catch (const StageError &) {
      throw;
    } catch (const std::exception &e) {
      throw StageError(name, e.what());
    }
    key_ = key;
    timing_[name] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  void say(const std::string &msg) const {
    if (log_)
      *log_ << "[dovforge] " << msg << std::endl;
  }

private:
  fs::path out_;
  bool fresh_;
  std::ostream *log_;
  std::map<std::string, double> &timing_;
  std::string key_ = kFormatTag;
};

json quality_json(const QualityTriple &q) {
  return {{"psnr", q.psnr}, {"mse", q.mse}, {"ssim", q.ssim}};
}

QualityTriple quality_from(const json &j) {
  return {j.at("psnr").get<double>(), j.at("mse").get<double>(), j.at("ssim").get<double>()};
}

template <class T> json opt_json(const std::optional<T> &v) {
  return v ? json(*v) : json();
}

template <class T> std::optional<T> opt_from(const json &j, const char *key) {
  if (!j.contains(key) || j.at(key).is_null())
    return std::nullopt;
  return j.at(key).get<T>();
}

std::optional<QualityTriple> opt_quality(const json &j, const char *key) {
  if (!j.contains(key) || j.at(key).is_null())
    return std::nullopt;
  return quality_from(j.at(key));
}

QualityTriple mean_quality(const std::vector<QualityTriple> &qs) {
  QualityTriple m{0, 0, 0};
  for (const auto &q : qs) {
    m.psnr += q.psnr;
    m.mse += q.mse;
    m.ssim += q.ssim;
  }
  const double n = static_cast<double>(qs.size());
  return {m.psnr / n, m.mse / n, m.ssim / n};
}

std::string cell_file(const VerifyCell &c) {
  return to_string(c.scenario) + "_" + to_string(c.api_mode) + "_" + c.watermark + ".json";
}

} // namespace

// ----------------------------------------------------------------- config --

std::vector<std::string> preset_names() {
  return {"desk", "paper", "smoke", "ablation-lb", "ablation-lw", "ablation-lbw"};
}

ExperimentConfig preset_config(const std::string &name) {
  if (name == "desk")
    return ExperimentConfig{};
  if (name == "paper") {
    ExperimentConfig c;
    c.preset = name;
    c.fwgen.learning_rate = 0.008;
    return c;
  }
  if (name == "smoke") {
    ExperimentConfig c;
    c.preset = name;
    c.train_count = 600;
    c.test_count = 200;
    c.train.epochs = 2;
    c.detector_aux_count = 300;
    c.detector_epochs = 4;
    c.fwgen.iterations = 10;
    c.num_probes = 30;
    return c;
  }
  if (name == "ablation-lb")
    return with_loss(name, LossMode::benign);
  if (name == "ablation-lw")
    return with_loss(name, LossMode::marked);
  if (name == "ablation-lbw")
    return with_loss(name, LossMode::both);
  throw ConfigError("unknown preset '" + name + "'");
}

ExperimentConfig config_from_json(const json &j) {
  if (!j.is_object())
    throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c =
      preset_config(j.contains("preset") ? get_as<std::string>(j.at("preset"), "preset")
                                         : "desk");
  for (const auto &[key, value] : j.items()) {
    if (key == "preset")
      continue;
    const auto it = setters().find(key);
    if (it == setters().end())
      throw ConfigError("unknown config key '" + key + "'");
    it->second(c, value);
  }
  return c;
}

json to_json(const ExperimentConfig &c) {
  return {
      {"preset", c.preset},
      {"seed", c.seed.value},
      {"output_dir", c.output_dir.string()},
      {"dataset", c.dataset},
      {"test_dataset", c.test_dataset},
      {"train_count", c.train_count},
      {"test_count", c.test_count},
      {"image_size", c.image_size},
      {"channels", c.channels},
      {"num_classes", c.num_classes},
      {"synthetic_noise", c.synthetic_noise},
      {"watermark", c.watermark},
      {"intensity", c.intensity},
      {"transparency", c.transparency},
      {"target_label", c.target_label},
      {"poison_rate", c.poison_rate},
      {"relabel", c.relabel},
      {"epochs", c.train.epochs},
      {"batch_size", c.train.batch_size},
      {"learning_rate", c.train.learning_rate},
      {"optimizer", nn::to_string(c.train.optimizer)},
      {"weight_decay", c.train.weight_decay},
      {"architecture", to_string(c.train.architecture)},
      {"detection", c.detection},
      {"dbn_filter", c.dbn_filter},
      {"detector_aux_count", c.detector_aux_count},
      {"detector_epochs", c.detector_epochs},
      {"detector_threshold", c.detector_threshold},
      {"independent_model", c.independent_model},
      {"forge", c.forge},
      {"alpha", c.fwgen.alpha},
      {"temperature_benign", opt_json(c.temperature_benign)},
      {"temperature_marked", opt_json(c.temperature_marked)},
      {"fwgen_learning_rate", c.fwgen.learning_rate},
      {"fwgen_iterations", c.fwgen.iterations},
      {"fwgen_batch_size", c.fwgen.batch_size},
      {"loss_mode", to_string(c.fwgen.loss_mode)},
      {"resample_noise", c.fwgen.resample_noise},
      {"generator_width", c.fwgen.arch.width},
      {"generator_latent_channels", c.fwgen.arch.latent_channels},
      {"generator_output_gain", c.fwgen.arch.output_gain},
      {"tau", c.tau},
      {"significance", c.significance},
      {"num_probes", c.num_probes},
  };
}

ExperimentConfig load_config(const fs::path &file) {
  std::ifstream in(file);
  if (!in)
    throw ConfigError("cannot read config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception &e) {
    throw ConfigError("malformed config " + file.string() + ": " + e.what());
  }
  return config_from_json(j);
}

FWGenConfig resolved_fwgen(const ExperimentConfig &cfg) {
  FWGenConfig f = cfg.fwgen;
  const double t = cfg.watermark == "cross" ? 500.0 : 800.0;
  f.temperature_benign = cfg.temperature_benign.value_or(t);
  f.temperature_marked = cfg.temperature_marked.value_or(t);
  f.seed = derive_seed(cfg.seed, "fwgen");
  return f;
}

void validate(const ExperimentConfig &c) {
  if (c.watermark != "cross" && c.watermark != "line" && c.watermark != "blended")
    throw ConfigError("watermark must be cross, line or blended");
  if (c.dataset != "synthetic") {
    if (!fs::is_directory(c.dataset))
      throw ConfigError("dataset directory not found: " + c.dataset);
    if (!fs::is_directory(c.test_dataset))
      throw ConfigError("test_dataset directory not found: '" + c.test_dataset + "'");
  } else if (c.train_count < 2 || c.test_count < 2) {
    throw ConfigError("synthetic train/test counts must be at least 2");
  }
  if (c.dbn_filter != "detection" && c.dbn_filter != "truth")
    throw ConfigError("dbn_filter must be detection or truth");
  if (c.dbn_filter == "detection" && !c.detection)
    throw ConfigError("dbn_filter=detection requires detection=true");
  if (c.independent_model != "benign" && c.independent_model != "clean")
    throw ConfigError("independent_model must be benign or clean");
  if (!(c.poison_rate > 0.0 && c.poison_rate <= 1.0))
    throw ConfigError("poison_rate must be in (0,1]");
  if (c.target_label < 0 || c.target_label >= c.num_classes)
    throw ConfigError("target_label must be in [0, num_classes)");
  if (!(c.transparency >= 0.0 && c.transparency <= 0.2))
    throw ConfigError("transparency must be in [0, 0.2]");
  if (c.train.epochs <= 0 || c.train.batch_size <= 0 || !(c.train.learning_rate > 0.0))
    throw ConfigError("classifier training settings must be positive");
  if (c.detection && (c.detector_aux_count < 2 || c.detector_epochs <= 0))
    throw ConfigError("detector settings must be positive");
  if (!(c.detector_threshold > 0.0 && c.detector_threshold < 1.0))
    throw ConfigError("detector_threshold must be in (0,1)");
  validate(resolved_fwgen(c));
  validate(VerifyConfig{c.tau, c.significance, c.num_probes});
}

// ----------------------------------------------------------------- report --

const VerifyCell &ExperimentReport::cell(Scenario s, ApiMode m,
                                         const std::string &watermark) const {
  for (const auto &c : cells)
    if (c.scenario == s && c.api_mode == m && c.watermark == watermark)
      return c;
  throw Error("no verification cell " + to_string(s) + "/" + to_string(m) + "/" + watermark);
}

json to_json(const ExperimentReport &r) {
  json cells = json::array();
  for (const auto &c : r.cells) {
    json cj = {{"scenario", to_string(c.scenario)},
               {"api_mode", to_string(c.api_mode)},
               {"watermark", c.watermark},
               {"skipped", c.skipped}};
    if (!c.skipped)
      cj["result"] = to_json(c.report);
    cells.push_back(cj);
  }
  json loss;
  if (r.final_loss)
    loss = {{"l_benign", r.final_loss->l_benign},
            {"l_marked", r.final_loss->l_marked},
            {"l_total", r.final_loss->l_total}};
  return {
      {"config", r.config},
      {"accuracy",
       {{"benign_ba", r.benign_ba}, {"marked_ba", r.marked_ba}, {"independent_ba", r.independent_ba}}},
      {"wsr",
       {{"owsr", r.owsr},
        {"fwsr", opt_json(r.fwsr)},
        {"benign_owsr", r.benign_owsr},
        {"benign_fwsr", opt_json(r.benign_fwsr)}}},
      {"detection",
       {{"released_size", r.released_size},
        {"poisoned", r.poisoned},
        {"flagged", r.flagged},
        {"dbn_size", r.dbn_size},
        {"bwdr", opt_json(r.bwdr)},
        {"false_flag_rate", opt_json(r.false_flag_rate)},
        {"recovered_target", opt_json(r.recovered_target)}}},
      {"verification", cells},
      {"quality",
       {{"clean_vs_original", quality_json(r.clean_vs_original)},
        {"clean_vs_forged", r.clean_vs_forged ? quality_json(*r.clean_vs_forged) : json()},
        {"original_vs_forged",
         r.original_vs_forged ? quality_json(*r.original_vs_forged) : json()},
        {"patterns", r.pattern_quality ? quality_json(*r.pattern_quality) : json()}}},
      {"fwgen", {{"loss_mode", r.loss_mode}, {"final_loss", loss}, {"loss_trace", r.loss_trace}}},
  };
}

ExperimentReport report_from_json(const json &j) {
  try {
    ExperimentReport r;
    r.config = j.at("config");
    const auto &acc = j.at("accuracy");
    r.benign_ba = acc.at("benign_ba").get<double>();
    r.marked_ba = acc.at("marked_ba").get<double>();
    r.independent_ba = acc.at("independent_ba").get<double>();
    const auto &w = j.at("wsr");
    r.owsr = w.at("owsr").get<double>();
    r.fwsr = opt_from<double>(w, "fwsr");
    r.benign_owsr = w.at("benign_owsr").get<double>();
    r.benign_fwsr = opt_from<double>(w, "benign_fwsr");
    const auto &d = j.at("detection");
    r.released_size = d.at("released_size").get<std::size_t>();
    r.poisoned = d.at("poisoned").get<std::size_t>();
    r.flagged = d.at("flagged").get<std::size_t>();
    r.dbn_size = d.at("dbn_size").get<std::size_t>();
    r.bwdr = opt_from<double>(d, "bwdr");
    r.false_flag_rate = opt_from<double>(d, "false_flag_rate");
    r.recovered_target = opt_from<int>(d, "recovered_target");
    for (const auto &cj : j.at("verification")) {
      VerifyCell c;
      c.scenario = scenario_from_string(cj.at("scenario").get<std::string>());
      c.api_mode = api_mode_from_string(cj.at("api_mode").get<std::string>());
      c.watermark = cj.at("watermark").get<std::string>();
      c.skipped = cj.at("skipped").get<bool>();
      if (!c.skipped) {
        const auto &rj = cj.at("result");
        auto &v = c.report;
        v.p_value = rj.at("p_value").get<double>();
        v.delta_p = opt_from<double>(rj, "delta_p");
        v.verdict = rj.at("verdict").get<std::string>() == "infringement"
                        ? Verdict::infringement
                        : Verdict::no_infringement;
        v.scenario = c.scenario;
        v.api_mode = c.api_mode;
        v.watermark_kind = rj.at("watermark_kind").get<std::string>();
        v.n = rj.at("n").get<int>();
        v.tau = rj.at("tau").get<double>();
        v.significance = rj.at("significance").get<double>();
        v.seed = RngSeed{rj.at("seed").get<std::uint64_t>()};
      }
      r.cells.push_back(std::move(c));
    }
    const auto &q = j.at("quality");
    r.clean_vs_original = quality_from(q.at("clean_vs_original"));
    r.clean_vs_forged = opt_quality(q, "clean_vs_forged");
    r.original_vs_forged = opt_quality(q, "original_vs_forged");
    r.pattern_quality = opt_quality(q, "patterns");
    const auto &f = j.at("fwgen");
    r.loss_mode = f.at("loss_mode").get<std::string>();
    if (!f.at("final_loss").is_null()) {
      const auto &l = f.at("final_loss");
      r.final_loss = LossBreakdown{l.at("l_benign").get<double>(), l.at("l_marked").get<double>(),
                                   l.at("l_total").get<double>(), 0.0};
    }
    r.loss_trace = f.at("loss_trace").get<std::string>();
    return r;
  } catch (const json::exception &e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
}

void write_model_sidecar(const fs::path &model_file, const TrainConfig &cfg,
                         const std::string &dataset) {
  fs::path side = model_file;
  side.replace_extension(".json");
  const json j = {{"architecture", to_string(cfg.architecture)},
                  {"epochs", cfg.epochs},
                  {"batch_size", cfg.batch_size},
                  {"learning_rate", cfg.learning_rate},
                  {"optimizer", nn::to_string(cfg.optimizer)},
                  {"weight_decay", cfg.weight_decay},
                  {"seed", cfg.seed.value},
                  {"dataset", dataset}};
  write_text(side, j.dump(2) + "\n");
}

// ------------------------------------------------------------------- run --

ExperimentReport run_experiment(const ExperimentConfig &cfg, const RunOptions &opts) {
  validate(cfg);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  DirLock lock(out);

  ExperimentReport rep;
  rep.config = to_json(cfg);
  // Where a run lands is not part of what it computes.
  rep.config.erase("output_dir");
  StageRunner runner(out, opts.fresh, opts.log, rep.timing);
  const RngSeed seed = cfg.seed;
  const Shape shape{cfg.channels, cfg.image_size, cfg.image_size};

  LabeledDataset train, test, released, dbn;
  Watermark t_ow, t_fw;
  std::vector<std::size_t> poisoned, excluded;
  Classifier marked, benign, clean;
  ScanResult scan;
  std::vector<LossBreakdown> trace;

  runner.run(
      "data",
      {{"dataset", cfg.dataset}, {"test_dataset", cfg.test_dataset},
       {"train_count", cfg.train_count}, {"test_count", cfg.test_count},
       {"shape", shape.str()}, {"num_classes", cfg.num_classes},
       {"noise", cfg.synthetic_noise}, {"seed", seed.value}},
      {"data/train/index.csv", "data/test/index.csv"},
      [&] {
        LabeledDataset tr, te;
        if (cfg.dataset == "synthetic") {
          SyntheticConfig sc{cfg.train_count, cfg.channels, cfg.image_size, cfg.image_size,
                             cfg.num_classes, cfg.synthetic_noise,
                             derive_seed(seed, "train-data"), "train"};
          tr = make_synthetic_dataset(sc);
          sc.count = cfg.test_count;
          sc.seed = derive_seed(seed, "test-data");
          sc.name = "test";
          te = make_synthetic_dataset(sc);
        } else {
          tr = load_dataset(cfg.dataset);
          te = load_dataset(cfg.test_dataset);
        }
        save_dataset(tr, out / "data/train");
        save_dataset(te, out / "data/test");
      },
      [&] {
        train = load_dataset(out / "data/train");
        test = load_dataset(out / "data/test");
        require_same_shape(train.image_shape(), test.image_shape(), "test images");
      });

  const Shape img = train.image_shape();
  runner.run(
      "watermark",
      {{"family", cfg.watermark}, {"intensity", cfg.intensity},
       {"transparency", cfg.transparency}, {"target_label", cfg.target_label}},
      {"watermark/original/meta.json"},
      [&] {
        Watermark wm;
        if (cfg.watermark == "blended") {
          Rng rng(derive_seed(seed, "blended-pattern"));
          Tensor t(img);
          for (double &v : t.values())
            v = rng.uniform();
          wm = make_blended_watermark(ImageTensor(std::move(t)).quantized(), cfg.transparency,
                                      cfg.target_label);
        } else {
          wm = make_badnets_watermark(img,
                                      cfg.watermark == "cross" ? BadnetsVariant::cross
                                                               : BadnetsVariant::line,
                                      cfg.intensity, cfg.target_label);
        }
        save_watermark(wm, out / "watermark/original");
      },
      [&] { t_ow = load_watermark(out / "watermark/original"); });

  runner.run(
      "embed", {{"rate", cfg.poison_rate}, {"relabel", cfg.relabel}},
      {"data/released/index.csv", "data/poisoned_indices.csv"},
      [&] {
        PoisonConfig pc{cfg.poison_rate, cfg.target_label, cfg.relabel,
                        derive_seed(seed, "poison")};
        const auto pr = poison_dataset(train, t_ow, pc);
        save_dataset(pr.dataset, out / "data/released");
        save_indices(pr.poisoned_indices, out / "data/poisoned_indices.csv");
      },
      [&] {
        released = load_dataset(out / "data/released");
        poisoned = load_indices(out / "data/poisoned_indices.csv");
      });

  auto train_cfg = [&](const char *stream) {
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(seed, stream);
    return tc;
  };
  const json train_params = {{"epochs", cfg.train.epochs},
                             {"batch_size", cfg.train.batch_size},
                             {"learning_rate", cfg.train.learning_rate},
                             {"optimizer", nn::to_string(cfg.train.optimizer)},
                             {"weight_decay", cfg.train.weight_decay},
                             {"architecture", to_string(cfg.train.architecture)}};

  runner.run(
      "train_marked", train_params, {"models/marked.bin"},
      [&] {
        fs::create_directories(out / "models");
        const auto tc = train_cfg("train-marked");
        save_model(train_classifier(released, tc), out / "models/marked.bin");
        write_model_sidecar(out / "models/marked.bin", tc, "data/released");
      },
      [&] { marked = load_model(out / "models/marked.bin"); });

  runner.run(
      "detect",
      {{"enabled", cfg.detection}, {"aux_count", cfg.detector_aux_count},
       {"epochs", cfg.detector_epochs}, {"threshold", cfg.detector_threshold}},
      cfg.detection ? std::vector<fs::path>{"detect/flags.csv", "detect/detector/detector.bin"}
                    : std::vector<fs::path>{},
      [&] {
        if (!cfg.detection)
          return;
        SyntheticConfig sc{cfg.detector_aux_count, img.channels, img.height, img.width,
                           cfg.num_classes, cfg.synthetic_noise,
                           derive_seed(seed, "aux-data"), "aux"};
        if (cfg.dataset != "synthetic")
          sc.num_classes = std::clamp(released.num_classes(), 2, 10);
        DetectorConfig dc;
        dc.threshold = cfg.detector_threshold;
        dc.epochs = cfg.detector_epochs;
        dc.seed = derive_seed(seed, "detector");
        const auto det = train_detector(make_synthetic_dataset(sc), {}, dc);
        save_detector(det, out / "detect/detector");
        save_scan(scan_dataset(det, released), out / "detect/flags.csv");
      },
      [&] {
        if (cfg.detection)
          scan = load_scan(out / "detect/flags.csv");
      });

  runner.run(
      "dbn", {{"filter", cfg.dbn_filter}}, {"data/dbn_excluded.csv"},
      [&] {
        save_indices(cfg.dbn_filter == "detection" ? scan.flagged : poisoned,
                     out / "data/dbn_excluded.csv");
      },
      [&] {
        excluded = load_indices(out / "data/dbn_excluded.csv");
        dbn = released.without(excluded, "dbn");
        if (dbn.empty())
          throw EmptyInputError("benign dataset is empty after filtering");
      });

  runner.run(
      "train_benign", train_params, {"models/benign.bin"},
      [&] {
        const auto tc = train_cfg("train-benign");
        save_model(train_classifier(dbn, tc), out / "models/benign.bin");
        write_model_sidecar(out / "models/benign.bin", tc, "data/released minus dbn_excluded");
      },
      [&] { benign = load_model(out / "models/benign.bin"); });

  if (cfg.independent_model == "clean") {
    runner.run(
        "train_clean", train_params, {"models/clean.bin"},
        [&] {
          const auto tc = train_cfg("train-clean");
          save_model(train_classifier(train, tc), out / "models/clean.bin");
          write_model_sidecar(out / "models/clean.bin", tc, "data/train");
        },
        [&] { clean = load_model(out / "models/clean.bin"); });
  }
  const Classifier &independent = cfg.independent_model == "clean" ? clean : benign;

  const FWGenConfig fc = resolved_fwgen(cfg);
  runner.run(
      "forge",
      {{"enabled", cfg.forge}, {"alpha", fc.alpha}, {"T_benign", fc.temperature_benign},
       {"T_marked", fc.temperature_marked}, {"lr", fc.learning_rate},
       {"iterations", fc.iterations}, {"batch", fc.batch_size},
       {"loss_mode", to_string(fc.loss_mode)}, {"resample_noise", fc.resample_noise},
       {"width", fc.arch.width}, {"latent", fc.arch.latent_channels},
       {"output_gain", fc.arch.output_gain}},
      cfg.forge ? std::vector<fs::path>{"watermark/forged/meta.json", "forge/loss_trace.csv"}
                : std::vector<fs::path>{},
      [&] {
        if (!cfg.forge)
          return;
        const auto res = train_fwgen(benign, marked, dbn, t_ow, fc);
        save_watermark(res.forged, out / "watermark/forged");
        save_trace(res.trace, out / "forge/loss_trace.csv");
      },
      [&] {
        if (!cfg.forge)
          return;
        t_fw = load_watermark(out / "watermark/forged");
        trace = load_trace(out / "forge/loss_trace.csv");
      });

  // Verification and measurement are cheap and always recomputed.
  runner.run("verify", json::object(), {}, [] {}, [&] {
    const VerifyConfig base{cfg.tau, cfg.significance, cfg.num_probes, ApiMode::probability,
                            Scenario::stealing, derive_seed(seed, "verify")};
    for (Scenario s : {Scenario::stealing, Scenario::independent})
      for (ApiMode m : {ApiMode::probability, ApiMode::label_only})
        for (const char *w : {"original", "forged"}) {
          VerifyCell c;
          c.scenario = s;
          c.api_mode = m;
          c.watermark = w;
          if (std::string(w) == "forged" && !cfg.forge) {
            c.skipped = true;
          } else {
            VerifyConfig vc = base;
            vc.api_mode = m;
            vc.scenario = s;
            c.report = verify(s == Scenario::stealing ? marked : independent, test,
                              std::string(w) == "forged" ? t_fw : t_ow, vc);
          }
          json cj = {{"skipped", c.skipped}};
          if (!c.skipped)
            cj["result"] = to_json(c.report);
          write_text(out / "verify" / cell_file(c), cj.dump(2) + "\n");
          rep.cells.push_back(std::move(c));
        }
  });

  runner.run("metrics", json::object(), {}, [] {}, [&] {
    rep.benign_ba = evaluate_accuracy(benign, test);
    rep.marked_ba = evaluate_accuracy(marked, test);
    rep.independent_ba = evaluate_accuracy(independent, test);
    rep.owsr = wsr(marked, test, t_ow);
    rep.benign_owsr = wsr(independent, test, t_ow);
    rep.released_size = released.size();
    rep.poisoned = poisoned.size();
    rep.dbn_size = dbn.size();
    if (cfg.detection) {
      rep.flagged = scan.flagged.size();
      rep.bwdr = bwdr(scan.flagged, poisoned);
      rep.false_flag_rate = false_flag_rate(scan.flagged, poisoned, released.size());
    }
    try {
      rep.recovered_target = recover_target_label(marked, t_ow, test);
    } catch (const AmbiguityError &) {
      rep.recovered_target.reset();
    }

    const auto probes = select_probes(test, cfg.target_label, cfg.num_probes,
                                      derive_seed(derive_seed(seed, "verify"), "probes"));
    std::vector<QualityTriple> co, cf, of;
    for (std::size_t i : probes) {
      const ImageTensor &x = test[i].image;
      const ImageTensor xo = embed(x, t_ow);
      co.push_back(quality(x, xo));
      if (cfg.forge) {
        const ImageTensor xf = embed(x, t_fw);
        cf.push_back(quality(x, xf));
        of.push_back(quality(xo, xf));
      }
    }
    rep.clean_vs_original = mean_quality(co);
    rep.loss_mode = to_string(fc.loss_mode);
    if (cfg.forge) {
      rep.fwsr = wsr(marked, test, t_fw);
      rep.benign_fwsr = wsr(independent, test, t_fw);
      rep.clean_vs_forged = mean_quality(cf);
      rep.original_vs_forged = mean_quality(of);
      rep.pattern_quality = quality(t_ow.pattern(), t_fw.pattern());
      if (!trace.empty())
        rep.final_loss = trace.back();
      rep.loss_trace = "forge/loss_trace.csv";
    }
  });

  write_text(out / "report.json", to_json(rep).dump(2) + "\n");
  json timing(rep.timing);
  write_text(out / "timing.json", timing.dump(2) + "\n");
  runner.say("report written to " + (out / "report.json").string());
  return rep;
}

// ---------------------------------------------------------------- render --

std::string format_sci(double v) {
  if (v == 0.0)
    return "0";
  if (v == 1.0)
    return "1";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1e", v);
  std::string s(buf);
  const auto e = s.find('e');
  std::string mant = s.substr(0, e);
  std::string exp = s.substr(e + 1);
  const bool neg = exp[0] == '-';
  exp.erase(0, 1);
  exp.erase(0, std::min(exp.find_first_not_of('0'), exp.size() - 1));
  return mant + "e" + (neg ? "-" : "") + exp;
}

std::string render_tables(const ExperimentReport &r) {
  static const std::string dash = "—";
  std::ostringstream os;
  char buf[256];
  auto num = [](const std::optional<double> &v, const char *fmt) {
    if (!v)
      return dash;
    char b[64];
    std::snprintf(b, sizeof b, fmt, *v);
    return std::string(b);
  };
  // Pads by code points so the dash lines up.
  auto pad = [](const std::string &s, std::size_t w) {
    std::size_t cps = 0;
    for (unsigned char c : s)
      cps += (c & 0xC0) != 0x80;
    return s + std::string(w > cps ? w - cps : 0, ' ');
  };
  auto cell = [&](Scenario s, ApiMode m, const char *w) -> const VerifyCell * {
    for (const auto &c : r.cells)
      if (c.scenario == s && c.api_mode == m && c.watermark == w)
        return c.skipped ? nullptr : &c;
    return nullptr;
  };

  os << "Models and watermark success\n";
  std::snprintf(buf, sizeof buf, "  BA benign %.4f  BA watermarked %.4f  BA independent %.4f\n",
                r.benign_ba, r.marked_ba, r.independent_ba);
  os << buf;
  os << "  OWSR " << num(r.owsr, "%.4f") << "  FWSR " << num(r.fwsr, "%.4f")
     << "  (independent model: OWSR " << num(r.benign_owsr, "%.4f") << ", FWSR "
     << num(r.benign_fwsr, "%.4f") << ")\n\n";

  os << "Detection\n";
  os << "  released " << r.released_size << "  watermarked " << r.poisoned << "  flagged "
     << r.flagged << "  benign subset " << r.dbn_size << "\n";
  os << "  BWDR " << num(r.bwdr, "%.4f") << "  false-flag rate " << num(r.false_flag_rate, "%.4f")
     << "  recovered target "
     << (r.recovered_target ? std::to_string(*r.recovered_target) : dash) << "\n\n";

  os << "Probability available (paired T-test)\n";
  os << "  " << pad("", 4) << pad("p original", 14) << pad("p forged", 14)
     << pad("dP original", 14) << "dP forged\n";
  for (Scenario s : {Scenario::stealing, Scenario::independent}) {
    const auto *o = cell(s, ApiMode::probability, "original");
    const auto *f = cell(s, ApiMode::probability, "forged");
    auto p = [&](const VerifyCell *c) { return c ? format_sci(c->report.p_value) : dash; };
    auto d = [&](const VerifyCell *c) {
      return c && c->report.delta_p ? format_sci(*c->report.delta_p) : dash;
    };
    os << "  " << pad(s == Scenario::stealing ? "S" : "I", 4) << pad(p(o), 14) << pad(p(f), 14)
       << pad(d(o), 14) << d(f) << "\n";
  }
  os << "\nLabel only (Wilcoxon signed-rank)\n";
  os << "  " << pad("", 4) << pad("p original", 14) << "p forged\n";
  for (Scenario s : {Scenario::stealing, Scenario::independent}) {
    const auto *o = cell(s, ApiMode::label_only, "original");
    const auto *f = cell(s, ApiMode::label_only, "forged");
    auto p = [&](const VerifyCell *c) { return c ? format_sci(c->report.p_value) : dash; };
    os << "  " << pad(s == Scenario::stealing ? "S" : "I", 4) << pad(p(o), 14) << p(f) << "\n";
  }

  os << "\nImage quality (mean over probes)\n";
  os << "  " << pad("pair", 22) << pad("PSNR", 10) << pad("MSE", 12) << "SSIM\n";
  auto qrow = [&](const char *name, const std::optional<QualityTriple> &q) {
    os << "  " << pad(name, 22);
    if (!q) {
      os << pad(dash, 10) << pad(dash, 12) << dash << "\n";
      return;
    }
    std::snprintf(buf, sizeof buf, "%-10.2f%-12.6f%.4f\n", q->psnr, q->mse, q->ssim);
    os << buf;
  };
  qrow("clean vs original", r.clean_vs_original);
  qrow("clean vs forged", r.clean_vs_forged);
  qrow("original vs forged", r.original_vs_forged);
  qrow("patterns", r.pattern_quality);

  os << "\nFW-Gen (" << (r.loss_mode.empty() ? dash : r.loss_mode) << ")\n";
  if (r.final_loss) {
    std::snprintf(buf, sizeof buf, "  final L_B %.6g  L_W %.6g  total %.6g\n",
                  r.final_loss->l_benign, r.final_loss->l_marked, r.final_loss->l_total);
    os << buf;
  } else {
    os << "  " << dash << "\n";
  }
  return os.str();
}

} // namespace dovforge
