// SPDX-License-Identifier: Apache-2.0
/**
 * @file   pipeline.hpp
 * @brief  End-to-end experiment: watermark a dataset, train the watermarked
 *         and benign models, detect, forge, verify every cell and measure.
 *
 * Every stage persists its artifacts under the output directory and records
 * a key derived from the configuration that produced them. A rerun with the
 * same configuration reuses stages whose key and artifacts are present.
 * Downstream stages always consume the reloaded artifacts, so a fresh run
 * and a resumed run see the same bytes.
 */
#ifndef DOVFORGE_PIPELINE_HPP
#define DOVFORGE_PIPELINE_HPP

#include <dovforge/dov.hpp>
#include <dovforge/error.hpp>
#include <dovforge/fwgen.hpp>
#include <dovforge/metrics.hpp>
#include <dovforge/training.hpp>

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dovforge {

/// A stage failed; what() carries the stage name and the cause.
class StageError : public Error {
public:
  StageError(std::string stage, const std::string &cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
  const std::string &stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

struct ExperimentConfig {
  std::string preset = "desk";
  RngSeed seed{1};
  std::filesystem::path output_dir = "run";

  // "synthetic", or a dataset directory (then test_dataset is required).
  std::string dataset = "synthetic";
  std::string test_dataset;
  std::size_t train_count = 5000;
  std::size_t test_count = 1000;
  int image_size = 32;
  int channels = 3;
  int num_classes = 10;
  double synthetic_noise = 0.02;

  std::string watermark = "blended"; // cross | line | blended
  double intensity = 1.0;
  double transparency = 0.2;
  int target_label = 0;
  double poison_rate = 0.1;
  bool relabel = true;

  TrainConfig train{.epochs = 4};

  bool detection = true;
  std::string dbn_filter = "detection"; // detection | truth
  std::size_t detector_aux_count = 2000;
  int detector_epochs = 16;
  double detector_threshold = 0.5;
  std::string independent_model = "benign"; // benign | clean

  bool forge = true;
  /// Temperatures left unset resolve to 500 for cross and 800 otherwise.
  std::optional<double> temperature_benign;
  std::optional<double> temperature_marked;
  FWGenConfig fwgen{.learning_rate = 0.002};

  double tau = 0.2;
  double significance = 0.05;
  int num_probes = 100;
};

/// Names accepted by preset_config.
std::vector<std::string> preset_names();
/// Throws ConfigError for an unknown name.
ExperimentConfig preset_config(const std::string &name);

/// Flat JSON. "preset" (if present) selects the base; remaining keys
/// override it. Unknown keys and bad values throw ConfigError.
ExperimentConfig config_from_json(const nlohmann::json &j);
nlohmann::json to_json(const ExperimentConfig &cfg);
ExperimentConfig load_config(const std::filesystem::path &file);

/// Fully resolved FW-Gen settings (temperatures, seed).
FWGenConfig resolved_fwgen(const ExperimentConfig &cfg);
/// Throws ConfigError on an invalid configuration.
void validate(const ExperimentConfig &cfg);

struct VerifyCell {
  Scenario scenario = Scenario::stealing;
  ApiMode api_mode = ApiMode::probability;
  std::string watermark = "original"; // original | forged
  bool skipped = false;
  VerificationReport report;
};

struct ExperimentReport {
  nlohmann::json config;
  double benign_ba = 0.0;
  double marked_ba = 0.0;
  double independent_ba = 0.0;
  double owsr = 0.0;
  std::optional<double> fwsr;
  double benign_owsr = 0.0;
  std::optional<double> benign_fwsr;

  std::size_t released_size = 0;
  std::size_t poisoned = 0;
  std::size_t flagged = 0;
  std::size_t dbn_size = 0;
  std::optional<double> bwdr;
  std::optional<double> false_flag_rate;
  std::optional<int> recovered_target;

  std::vector<VerifyCell> cells;

  QualityTriple clean_vs_original;
  std::optional<QualityTriple> clean_vs_forged;
  std::optional<QualityTriple> original_vs_forged;
  std::optional<QualityTriple> pattern_quality;

  std::string loss_mode;
  std::optional<LossBreakdown> final_loss;
  std::string loss_trace;

  /// Seconds per stage; kept out of report.json.
  std::map<std::string, double> timing;

  /// Cell lookup; throws Error if absent.
  const VerifyCell &cell(Scenario s, ApiMode m, const std::string &watermark) const;
};

nlohmann::json to_json(const ExperimentReport &report);
ExperimentReport report_from_json(const nlohmann::json &j);

struct RunOptions {
  /// Ignore persisted stages and recompute everything.
  bool fresh = false;
  /// Progress lines go here when set.
  std::ostream *log = nullptr;
};

/// Runs every stage, writes report.json and timing.json to the output
/// directory and returns the report. Holds output_dir/.lock while running.
/// Stage failures throw StageError.
ExperimentReport run_experiment(const ExperimentConfig &cfg, const RunOptions &opts = {});

/// Fixed-width text tables of a report. Skipped cells print as "—".
std::string render_tables(const ExperimentReport &report);

/// "1", "0", or two significant digits like "1.2e-173".
std::string format_sci(double v);

/// Writes `<model path without extension>.json` describing the training run.
void write_model_sidecar(const std::filesystem::path &model_file, const TrainConfig &cfg,
                         const std::string &dataset);

} // namespace dovforge

#endif // DOVFORGE_PIPELINE_HPP
