// SPDX-License-Identifier: Apache-2.0
/**
 * @file   dataset.hpp
 * @brief  Labeled image collections and their on-disk directory format
 *         (index.csv + one PNG per image + meta.json).
 */
#ifndef DOVFORGE_DATASET_HPP
#define DOVFORGE_DATASET_HPP

#include <dovforge/rng.hpp>
#include <dovforge/tensor.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace dovforge {

struct Sample {
  ImageTensor image;
  int label = 0;

  friend bool operator==(const Sample &, const Sample &) = default;
};

/// Ordered (image, label) pairs sharing one image shape.
class LabeledDataset {
public:
  LabeledDataset() = default;
  /// Validates labels against num_classes and shapes against the first item.
  LabeledDataset(std::vector<Sample> items, int num_classes, std::string name);

  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  int num_classes() const noexcept { return num_classes_; }
  const std::string &name() const noexcept { return name_; }
  const Shape &image_shape() const noexcept { return shape_; }

  const Sample &operator[](std::size_t i) const { return items_[i]; }
  const std::vector<Sample> &items() const noexcept { return items_; }

  /// Items at the given indices, in the given order.
  LabeledDataset subset(const std::vector<std::size_t> &indices,
                        std::string name) const;
  /// Every item whose index is not listed.
  LabeledDataset without(const std::vector<std::size_t> &indices,
                         std::string name) const;

  friend bool operator==(const LabeledDataset &,
                         const LabeledDataset &) = default;

private:
  std::vector<Sample> items_;
  int num_classes_ = 0;
  std::string name_;
  Shape shape_;
};

struct DatasetSplit {
  LabeledDataset first;
  LabeledDataset second;
  std::vector<std::size_t> first_indices;
  std::vector<std::size_t> second_indices;
};

/// Seeded disjoint partition with |first| = floor(fraction * N).
DatasetSplit split_dataset(const LabeledDataset &ds, double fraction,
                           RngSeed seed);

void save_dataset(const LabeledDataset &ds, const std::filesystem::path &dir);
LabeledDataset load_dataset(const std::filesystem::path &dir);

/// One non-negative integer per line; blank lines and a non-numeric
/// header line are skipped.
void save_indices(const std::vector<std::size_t> &indices,
                  const std::filesystem::path &file);
std::vector<std::size_t> load_indices(const std::filesystem::path &file);

} // namespace dovforge

#endif // DOVFORGE_DATASET_HPP
