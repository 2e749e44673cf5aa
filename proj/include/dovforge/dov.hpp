// SPDX-License-Identifier: Apache-2.0
/**
 * @file   dov.hpp
 * @brief  Dataset ownership verification. A suspicious model is queried on
 *         probe images with and without a watermark, and a one-sided test
 *         decides whether it responds to the watermark.
 *
 * Probability mode runs the paired T-test on target-class probabilities
 * (clean vs. watermarked) and reports the mean gap. Label-only mode runs the
 * Wilcoxon signed-rank test on match indicators of the watermarked queries.
 */
#ifndef DOVFORGE_DOV_HPP
#define DOVFORGE_DOV_HPP

#include <dovforge/classifier.hpp>
#include <dovforge/dataset.hpp>
#include <dovforge/rng.hpp>
#include <dovforge/watermark.hpp>

#include <json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dovforge {

enum class ApiMode { probability, label_only };
enum class Scenario { stealing, independent };
enum class Verdict { infringement, no_infringement };

std::string to_string(ApiMode mode);
std::string to_string(Scenario scenario);
std::string to_string(Verdict verdict);
/// Accepts "probability"/"prob" and "label"/"label_only".
ApiMode api_mode_from_string(std::string_view s);
/// Accepts "stealing"/"S" and "independent"/"I".
Scenario scenario_from_string(std::string_view s);

struct VerifyConfig {
  double tau = 0.2;
  double significance = 0.05;
  int num_probes = 100;
  ApiMode api_mode = ApiMode::probability;
  Scenario scenario = Scenario::stealing;
  RngSeed seed{};
};

/// Throws ConfigError unless 0 < significance < 1, tau >= 0, n >= 2.
void validate(const VerifyConfig &cfg);

struct ProbeRecord {
  std::size_t index = 0;
  /// Target-class probability on the clean probe (probability mode).
  double benign_prob_at_target = 0.0;
  /// Target-class probability on the watermarked probe (probability mode).
  double marked_prob_at_target = 0.0;
  /// Predicted label on the watermarked probe (both modes).
  int predicted_label = 0;
  int target_label = 0;
};

struct VerificationReport {
  double p_value = 1.0;
  /// Set in probability mode only.
  std::optional<double> delta_p;
  Verdict verdict = Verdict::no_infringement;
  Scenario scenario = Scenario::stealing;
  ApiMode api_mode = ApiMode::probability;
  /// "original" or "forged".
  std::string watermark_kind;
  int n = 0;
  double tau = 0.0;
  double significance = 0.0;
  RngSeed seed{};
  std::vector<ProbeRecord> probes;
};

/// Seeded choice of cfg.num_probes indices whose label differs from the
/// target, sorted ascending. Throws SampleSizeError if too few qualify.
std::vector<std::size_t> select_probes(const LabeledDataset &probe_ds,
                                       int target_label, int num_probes,
                                       RngSeed seed);

/// Embeds wm into each selected probe, queries the model as cfg.api_mode
/// allows and runs the matching test. Verdict is infringement iff
/// p < significance, in either scenario.
VerificationReport verify(const Classifier &model, const LabeledDataset &probe_ds,
                          const Watermark &wm, const VerifyConfig &cfg);

/// Report fields without per-probe records.
nlohmann::json to_json(const VerificationReport &report);

} // namespace dovforge

#endif // DOVFORGE_DOV_HPP
