// SPDX-License-Identifier: Apache-2.0
/**
 * @file   classifier.hpp
 * @brief  K-class classifier exposing logits, plain softmax and
 *         temperature softmax, plus the versioned binary model file.
 */
#ifndef DOVFORGE_CLASSIFIER_HPP
#define DOVFORGE_CLASSIFIER_HPP

#include <dovforge/nn.hpp>
#include <dovforge/rng.hpp>
#include <dovforge/tensor.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dovforge {

enum class Architecture { small_cnn, mlp };

std::string to_string(Architecture arch);
Architecture architecture_from_string(std::string_view s);

/// Builds the layer stack for an architecture tag. small_cnn uses up to
/// three conv3x3+ReLU+maxpool stages (fewer for tiny inputs) and a linear
/// head; mlp is one 128-unit hidden layer.
nn::Sequential build_network(Architecture arch, const Shape &input,
                             int num_classes);

/// p_k = exp(s_k / T) / sum_j exp(s_j / T), evaluated stably.
std::vector<double> softmax(std::span<const double> logits,
                            double temperature = 1.0);
/// Index of the largest value; ties go to the smallest index.
int argmax(std::span<const double> values);

class Classifier {
public:
  Classifier() = default;
  /// Freshly initialized parameters drawn from init_seed.
  Classifier(Architecture arch, Shape input_shape, int num_classes,
             RngSeed init_seed);
  /// Wraps an existing network; its output must be num_classes x 1 x 1.
  Classifier(Architecture arch, nn::Sequential net, int num_classes);

  Architecture architecture() const noexcept { return arch_; }
  int num_classes() const noexcept { return num_classes_; }
  const Shape &input_shape() const noexcept { return net_.input_shape(); }

  const nn::Sequential &network() const noexcept { return net_; }
  nn::Sequential &mutable_network() noexcept { return net_; }

  std::vector<double> logits(const Tensor &x) const;
  std::vector<double> predict_proba(const Tensor &x, double temperature = 1.0) const;
  int predict_label(const Tensor &x) const;

  /// Rounds every parameter to the nearest float32 so that the in-memory
  /// model equals its serialized form.
  void round_to_float32();

  friend bool operator==(const Classifier &a, const Classifier &b);

private:
  Architecture arch_ = Architecture::small_cnn;
  int num_classes_ = 0;
  nn::Sequential net_;
};

std::vector<double> predict_proba(const Classifier &model,
                                  const ImageTensor &image,
                                  double temperature = 1.0);
int predict_label(const Classifier &model, const ImageTensor &image);

/// Binary layout (little-endian): "DOVFMDL\0", u32 version, u32 tag length,
/// tag bytes, u32 K, u32 C, u32 H, u32 W, u64 parameter count, float32[].
void save_model(const Classifier &model, const std::filesystem::path &file);
Classifier load_model(const std::filesystem::path &file);

} // namespace dovforge

#endif // DOVFORGE_CLASSIFIER_HPP
