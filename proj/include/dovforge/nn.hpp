// SPDX-License-Identifier: Apache-2.0
/**
 * @file   nn.hpp
 * @brief  Minimal per-sample feed-forward network engine used by the
 *         classifiers, the frequency detector and the watermark generator.
 *
 * Layers are immutable descriptions; all trainable state lives in one flat
 * parameter vector owned by Sequential. backward() accumulates parameter
 * gradients into a caller-provided buffer so that batch reductions can be
 * done in a fixed order.
 */
#ifndef DOVFORGE_NN_HPP
#define DOVFORGE_NN_HPP

#include <dovforge/rng.hpp>
#include <dovforge/tensor.hpp>

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dovforge::nn {

class Layer {
public:
  virtual ~Layer() = default;

  virtual std::string name() const = 0;
  virtual Shape output_shape(const Shape &in) const = 0;
  virtual std::size_t param_count(const Shape &) const { return 0; }
  virtual void init(const Shape &, std::span<double>, Rng &) const {}

  virtual void forward(const Shape &in_shape, std::span<const double> params,
                       const Tensor &in, Tensor &out) const = 0;

  /// grad_in may be null; param_grad may be empty (no accumulation).
  virtual void backward(const Shape &in_shape, std::span<const double> params,
                        const Tensor &in, const Tensor &out,
                        const Tensor &grad_out, Tensor *grad_in,
                        std::span<double> param_grad) const = 0;
};

/// 3x3 convolution, stride 1, zero "same" padding.
std::shared_ptr<const Layer> conv3x3(int out_channels, double weight_gain = 1.0,
                                     double bias_init = 0.0);
std::shared_ptr<const Layer> relu();
/// 2x2 max pooling, stride 2 (odd trailing rows/cols dropped).
std::shared_ptr<const Layer> maxpool2();
/// Fully connected over the flattened input; output shape K x 1 x 1.
std::shared_ptr<const Layer> linear(int out_features, double weight_gain = 1.0);
/// Element-wise clamp to [0,1].
std::shared_ptr<const Layer> clamp01();

class Sequential {
public:
  struct Trace {
    /// acts[0] is the input, acts[i + 1] the output of layer i.
    std::vector<Tensor> acts;
  };

  Sequential() = default;
  Sequential(Shape input_shape,
             std::vector<std::shared_ptr<const Layer>> layers);

  const Shape &input_shape() const noexcept { return shapes_.front(); }
  const Shape &output_shape() const noexcept { return shapes_.back(); }
  std::size_t layer_count() const noexcept { return layers_.size(); }

  std::span<const double> params() const noexcept { return params_; }
  std::span<double> mutable_params() noexcept { return params_; }
  std::size_t param_count() const noexcept { return params_.size(); }

  void init(Rng &rng);

  Tensor forward(const Tensor &x) const;
  void forward(const Tensor &x, Trace &trace) const;
  /// Accumulates d(loss)/d(params) into param_grad (if non-empty) and
  /// writes d(loss)/d(input) into grad_input (if non-null).
  void backward(const Trace &trace, const Tensor &grad_output,
                std::span<double> param_grad, Tensor *grad_input) const;

  std::string describe() const;

private:
  std::vector<std::shared_ptr<const Layer>> layers_;
  std::vector<Shape> shapes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

} // namespace dovforge::nn

#endif // DOVFORGE_NN_HPP
