// SPDX-License-Identifier: Apache-2.0
#include <dovforge/error.hpp>
#include <dovforge/tensor.hpp>

#include <algorithm>
#include <cmath>

namespace dovforge {

std::string Shape::str() const {
  return std::to_string(channels) + "x" + std::to_string(height) + "x" +
         std::to_string(width);
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size())
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

ImageTensor::ImageTensor(Shape shape) : t_(shape, 0.0) {}

ImageTensor::ImageTensor(Tensor t) : t_(std::move(t)) {
  for (double v : t_.values()) {
    if (!(v >= 0.0 && v <= 1.0))
      throw ConfigError("image value " + std::to_string(v) +
                        " outside [0,1]");
  }
}

ImageTensor::ImageTensor(Shape shape, std::vector<double> data)
    : ImageTensor(Tensor(shape, std::move(data))) {}

ImageTensor ImageTensor::clamped(Tensor t) {
  for (double &v : t.values()) {
    if (std::isnan(v))
      throw NumericError("NaN pixel value");
    v = std::clamp(v, 0.0, 1.0);
  }
  return ImageTensor(std::move(t));
}

ImageTensor ImageTensor::quantized() const {
  Tensor q = t_;
  for (double &v : q.values())
    v = std::round(v * 255.0) / 255.0;
  return ImageTensor(std::move(q));
}

void require_same_shape(const Shape &a, const Shape &b, const char *what) {
  if (!(a == b))
    throw ShapeError(std::string(what) + ": shape " + a.str() +
                     " does not match " + b.str());
}

} // namespace dovforge
