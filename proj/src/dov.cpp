// SPDX-License-Identifier: Apache-2.0
#include <dovforge/dov.hpp>
#include <dovforge/error.hpp>
#include <dovforge/parallel.hpp>
#include <dovforge/stats.hpp>
#include <dovforge/watermarking.hpp>

namespace dovforge {

std::string to_string(ApiMode mode) {
  return mode == ApiMode::probability ? "probability" : "label_only";
}

std::string to_string(Scenario scenario) {
  return scenario == Scenario::stealing ? "stealing" : "independent";
}

std::string to_string(Verdict verdict) {
  return verdict == Verdict::infringement ? "infringement" : "no_infringement";
}

ApiMode api_mode_from_string(std::string_view s) {
  if (s == "probability" || s == "prob")
    return ApiMode::probability;
  if (s == "label" || s == "label_only")
    return ApiMode::label_only;
  throw ConfigError("unknown api mode '" + std::string(s) + "'");
}

Scenario scenario_from_string(std::string_view s) {
  if (s == "stealing" || s == "S")
    return Scenario::stealing;
  if (s == "independent" || s == "I")
    return Scenario::independent;
  throw ConfigError("unknown scenario '" + std::string(s) + "'");
}

void validate(const VerifyConfig &cfg) {
  if (!(cfg.significance > 0.0 && cfg.significance < 1.0))
    throw ConfigError("significance must be in (0,1)");
  if (!(cfg.tau >= 0.0))
    throw ConfigError("tau must be non-negative");
  if (cfg.num_probes < 2)
    throw ConfigError("need at least 2 probes");
}

std::vector<std::size_t> select_probes(const LabeledDataset &probe_ds,
                                       int target_label, int num_probes,
                                       RngSeed seed) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < probe_ds.size(); ++i)
    if (probe_ds[i].label != target_label)
      eligible.push_back(i);
  if (num_probes < 2 || eligible.size() < static_cast<std::size_t>(num_probes))
    throw SampleSizeError("need " + std::to_string(num_probes) +
                          " probes off the target class, have " +
                          std::to_string(eligible.size()));
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t k : rng.sample_without_replacement(eligible.size(),
                                                      static_cast<std::size_t>(num_probes)))
    out.push_back(eligible[k]);
  return out;
}

VerificationReport verify(const Classifier &model, const LabeledDataset &probe_ds,
                          const Watermark &wm, const VerifyConfig &cfg) {
  validate(cfg);
  require_same_shape(model.input_shape(), wm.shape(), "verify watermark");
  const int target = wm.target_label();
  if (target < 0 || target >= model.num_classes())
    throw ConfigError("target label outside the model's classes");

  const auto idx = select_probes(probe_ds, target, cfg.num_probes,
                                 derive_seed(cfg.seed, "probes"));
  const bool prob = cfg.api_mode == ApiMode::probability;

  std::vector<ProbeRecord> probes(idx.size());
  parallel_for(idx.size(), [&](std::size_t i) {
    const ImageTensor &x = probe_ds[idx[i]].image;
    ProbeRecord &r = probes[i];
    r.index = idx[i];
    r.target_label = target;
    const ImageTensor marked = embed(x, wm);
    if (prob) {
      const auto pm = predict_proba(model, marked);
      r.marked_prob_at_target = pm[target];
      r.benign_prob_at_target = predict_proba(model, x)[target];
      r.predicted_label = argmax(pm);
    } else {
      r.predicted_label = predict_label(model, marked);
    }
  });

  VerificationReport rep;
  rep.scenario = cfg.scenario;
  rep.api_mode = cfg.api_mode;
  rep.watermark_kind = wm.kind() == WatermarkKind::forged ? "forged" : "original";
  rep.n = cfg.num_probes;
  rep.tau = cfg.tau;
  rep.significance = cfg.significance;
  rep.seed = cfg.seed;

  if (prob) {
    std::vector<double> benign, marked;
    for (const auto &r : probes) {
      benign.push_back(r.benign_prob_at_target);
      marked.push_back(r.marked_prob_at_target);
    }
    rep.p_value = stats::paired_t_test(benign, marked, cfg.tau).p_value;
    rep.delta_p = stats::delta_p(marked, benign);
  } else {
    std::vector<int> preds;
    for (const auto &r : probes)
      preds.push_back(r.predicted_label);
    rep.p_value = stats::wilcoxon_test(preds, target, model.num_classes()).p_value;
  }
  rep.verdict = rep.p_value < cfg.significance ? Verdict::infringement
                                               : Verdict::no_infringement;
  rep.probes = std::move(probes);
  return rep;
}

nlohmann::json to_json(const VerificationReport &report) {
  nlohmann::json j;
  j["p_value"] = report.p_value;
  j["delta_p"] = report.delta_p ? nlohmann::json(*report.delta_p) : nlohmann::json();
  j["verdict"] = to_string(report.verdict);
  j["scenario"] = to_string(report.scenario);
  j["api_mode"] = to_string(report.api_mode);
  j["watermark_kind"] = report.watermark_kind;
  j["n"] = report.n;
  j["tau"] = report.tau;
  j["significance"] = report.significance;
  j["seed"] = report.seed.value;
  return j;
}

} // namespace dovforge
