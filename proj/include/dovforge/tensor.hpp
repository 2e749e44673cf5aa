// SPDX-License-Identifier: Apache-2.0
/**
 * @file   tensor.hpp
 * @brief  Dense C x H x W tensors and the [0,1]-bounded ImageTensor.
 */
#ifndef DOVFORGE_TENSOR_HPP
#define DOVFORGE_TENSOR_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dovforge {

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  std::string str() const;

  friend bool operator==(const Shape &, const Shape &) = default;
};

/// Row-major C x H x W array of doubles. No range constraint.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape &shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }

  double &at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_.height + y) *
                     shape_.width +
                 x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_.height + y) *
                     shape_.width +
                 x];
  }
  double &operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double *data() noexcept { return data_.data(); }
  const double *data() const noexcept { return data_.data(); }

  void fill(double v);

  friend bool operator==(const Tensor &, const Tensor &) = default;

private:
  Shape shape_;
  std::vector<double> data_;
};

/// Pixel tensor whose every element lies in [0,1].
class ImageTensor {
public:
  ImageTensor() = default;
  /// Zero image.
  explicit ImageTensor(Shape shape);
  /// Throws ConfigError if any value is outside [0,1] or non-finite.
  explicit ImageTensor(Tensor t);
  ImageTensor(Shape shape, std::vector<double> data);

  /// Clamps each value into [0,1] instead of rejecting.
  static ImageTensor clamped(Tensor t);

  const Shape &shape() const noexcept { return t_.shape(); }
  std::size_t size() const noexcept { return t_.size(); }
  double operator[](std::size_t i) const { return t_[i]; }
  double at(int c, int y, int x) const { return t_.at(c, y, x); }
  std::span<const double> values() const noexcept { return t_.values(); }
  const Tensor &tensor() const noexcept { return t_; }

  /// Rounds every value to the nearest k/255.
  ImageTensor quantized() const;

  friend bool operator==(const ImageTensor &, const ImageTensor &) = default;

private:
  Tensor t_;
};

void require_same_shape(const Shape &a, const Shape &b, const char *what);

} // namespace dovforge

#endif // DOVFORGE_TENSOR_HPP
