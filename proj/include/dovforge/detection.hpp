// SPDX-License-Identifier: Apache-2.0
/**
 * @file   detection.hpp
 * @brief  Frequency-domain watermark detector used by the attacker to find
 *         watermarked samples in a released dataset.
 *
 * A small classifier looks at squashed per-channel DCT coefficients and is
 * trained on clean images against the same images carrying randomized
 * synthetic triggers (solid patches, glyphs, strips, blended noise).
 */
#ifndef DOVFORGE_DETECTION_HPP
#define DOVFORGE_DETECTION_HPP

#include <dovforge/classifier.hpp>
#include <dovforge/dataset.hpp>
#include <dovforge/watermark.hpp>

#include <filesystem>
#include <vector>

namespace dovforge {

/// Orthonormal type-II 2-D DCT per channel (height then width).
Tensor dct2(const Tensor &image);
/// Inverse of dct2.
Tensor idct2(const Tensor &coefficients);

/// Detector input: tanh(20 |c|) applied to every DCT coefficient.
ImageTensor dct_features(const ImageTensor &image);

/// A copy of image carrying one random synthetic trigger.
ImageTensor synthetic_corruption(const ImageTensor &image, Rng &rng);

struct DetectorConfig {
  double threshold = 0.5;
  int epochs = 16;
  int batch_size = 32;
  double learning_rate = 0.003;
  RngSeed seed{};
};

class FrequencyDetector {
public:
  FrequencyDetector() = default;
  FrequencyDetector(Classifier model, double threshold);

  const Classifier &model() const noexcept { return model_; }
  double threshold() const noexcept { return threshold_; }

  /// Probability that the image carries a trigger.
  double score(const ImageTensor &image) const;
  bool flags(const ImageTensor &image) const { return score(image) >= threshold_; }

private:
  Classifier model_;
  double threshold_ = 0.5;
};

/// Positives are clean images with a synthetic corruption or, when the bank
/// is non-empty, half of the time a bank trigger instead. Throws
/// EmptyInputError on an empty clean set.
FrequencyDetector train_detector(const LabeledDataset &clean_ds,
                                 const std::vector<Watermark> &trigger_bank,
                                 const DetectorConfig &cfg);

struct ScanResult {
  std::vector<double> scores;
  /// Ascending indices with score >= threshold.
  std::vector<std::size_t> flagged;
};

ScanResult scan_dataset(const FrequencyDetector &det, const LabeledDataset &ds);

/// |flagged ∩ truth| / |truth|. Throws EmptyInputError on empty truth.
double bwdr(const std::vector<std::size_t> &flagged,
            const std::vector<std::size_t> &truth);

/// Share of the n - |truth| clean indices that were flagged.
double false_flag_rate(const std::vector<std::size_t> &flagged,
                       const std::vector<std::size_t> &truth, std::size_t n);

/// Majority label of the model on wm-embedded probes. Throws AmbiguityError
/// naming the two most frequent labels when no label has more than half
/// the votes.
int recover_target_label(const Classifier &model, const Watermark &wm,
                         const LabeledDataset &probe);

/// Directory with detector.bin (model) and detector.json (threshold).
void save_detector(const FrequencyDetector &det, const std::filesystem::path &dir);
FrequencyDetector load_detector(const std::filesystem::path &dir);

/// CSV with header index,score,flagged.
void save_scan(const ScanResult &scan, const std::filesystem::path &file);
ScanResult load_scan(const std::filesystem::path &file);

} // namespace dovforge

#endif // DOVFORGE_DETECTION_HPP
