// SPDX-License-Identifier: Apache-2.0
/**
 * @file   synthetic.hpp
 * @brief  Procedural colored-shape dataset used as the bundled desk-scale
 *         benchmark (10 shape classes, random colors, position and size).
 */
#ifndef DOVFORGE_SYNTHETIC_HPP
#define DOVFORGE_SYNTHETIC_HPP

#include <dovforge/dataset.hpp>

namespace dovforge {

struct SyntheticConfig {
  std::size_t count = 1000;
  int channels = 3;
  int height = 32;
  int width = 32;
  /// At most 10; class k is the k-th shape family.
  int num_classes = 10;
  double noise = 0.02;
  RngSeed seed{};
  std::string name = "shapes";
};

/// Class-balanced (label i % K before shuffling), 8-bit quantized so the
/// result survives a PNG round trip unchanged.
LabeledDataset make_synthetic_dataset(const SyntheticConfig &cfg);

} // namespace dovforge

#endif // DOVFORGE_SYNTHETIC_HPP
