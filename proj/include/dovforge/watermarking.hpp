// SPDX-License-Identifier: Apache-2.0
/**
 * @file   watermarking.hpp
 * @brief  Trigger construction and dataset poisoning (owner side).
 */
#ifndef DOVFORGE_WATERMARKING_HPP
#define DOVFORGE_WATERMARKING_HPP

#include <dovforge/dataset.hpp>
#include <dovforge/rng.hpp>
#include <dovforge/watermark.hpp>

#include <vector>

namespace dovforge {

enum class BadnetsVariant { cross, line };

/// Cross: 5x5 plus-shaped glyph (9 pixels) whose bounding box sits one
/// pixel in from the lower-right corner. Line: the top 3 rows.
/// The pattern holds `intensity` on the trigger support; the blend map is
/// 0 there and 1 elsewhere.
Watermark make_badnets_watermark(const Shape &shape, BadnetsVariant variant,
                                 double intensity, int target_label);

/// Blend map is 1 - transparency wherever the pattern is nonzero, 1 where
/// it is zero. transparency must lie in [0, 0.2].
Watermark make_blended_watermark(const ImageTensor &pattern_image,
                                 double transparency, int target_label);

/// clip(blend * image + (1 - blend) * pattern, 0, 1), element-wise.
ImageTensor embed(const ImageTensor &image, const Watermark &wm);

/// Same dataset with every image embedded; labels unchanged.
LabeledDataset embed_all(const LabeledDataset &ds, const Watermark &wm);

struct PoisonConfig {
  double rate = 0.1;
  int target_label = 0;
  /// true: poisoned labels become target_label; false: clean-label regime.
  bool relabel = true;
  RngSeed seed{};
};

struct PoisonResult {
  LabeledDataset dataset;
  /// Sorted ascending.
  std::vector<std::size_t> poisoned_indices;
};

/// Replaces floor(rate * N) uniformly chosen samples by their embedded
/// version. Throws ConfigError when floor(rate * N) == 0 or the config
/// does not fit the dataset.
PoisonResult poison_dataset(const LabeledDataset &ds, const Watermark &wm,
                            const PoisonConfig &cfg);

} // namespace dovforge

#endif // DOVFORGE_WATERMARKING_HPP
