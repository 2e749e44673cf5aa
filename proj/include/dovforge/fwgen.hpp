// SPDX-License-Identifier: Apache-2.0
/**
 * @file   fwgen.hpp
 * @brief  Forged-watermark generator: an encoder/decoder conv net mapping a
 *         Gaussian noise image to a trigger pattern, trained by distillation
 *         against a frozen benign model and a frozen watermarked model.
 *
 * For a benign sample x with label y, original watermark t_ow and the
 * current generator output t_fw (both embedded with t_ow's blend map):
 *
 *   L_B = sum_i a T^2 CE(p^T(x+t_ow), p^T(x+t_fw)) + (1-a) CE(onehot(y), p(x+t_fw))
 *   L_W = same on the watermarked model with temperature T~ and onehot(y~)
 *
 * and the generator minimizes L_B, L_W or L_BW = L_B + L_W. Only generator
 * parameters are updated.
 */
#ifndef DOVFORGE_FWGEN_HPP
#define DOVFORGE_FWGEN_HPP

#include <dovforge/classifier.hpp>
#include <dovforge/dataset.hpp>
#include <dovforge/nn.hpp>
#include <dovforge/watermark.hpp>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dovforge {

enum class LossMode { benign, marked, both };

/// "LB", "LW", "LBW" (also accepts "L_B", "L_W", "L_BW", "LWB").
LossMode loss_mode_from_string(std::string_view s);
std::string to_string(LossMode mode);

struct GeneratorArch {
  int width = 16;
  int latent_channels = 8;
  /// Weight scale of the last decoder conv relative to He init. Small
  /// values start the generator near a flat mid-gray pattern.
  double output_gain = 0.02;
};

class Generator {
public:
  Generator() = default;
  /// Five conv3x3+ReLU encoder stages, five conv3x3+ReLU decoder stages,
  /// then a clamp to [0,1]. Input and output have the image shape.
  Generator(const Shape &image_shape, GeneratorArch arch, RngSeed init_seed);

  const Shape &shape() const noexcept { return net_.input_shape(); }
  const nn::Sequential &network() const noexcept { return net_; }
  nn::Sequential &mutable_network() noexcept { return net_; }

  ImageTensor generate(const Tensor &noise) const;

private:
  nn::Sequential net_;
};

/// Standard Gaussian noise image drawn from seed.
Tensor draw_noise(const Shape &shape, RngSeed seed);

struct FWGenConfig {
  double alpha = 0.5;
  double temperature_benign = 500.0;
  double temperature_marked = 500.0;
  double learning_rate = 0.008;
  int iterations = 500;
  int batch_size = 32;
  LossMode loss_mode = LossMode::both;
  RngSeed seed{};
  /// Draw a fresh noise image every iteration instead of a fixed one.
  bool resample_noise = false;
  GeneratorArch arch{};
};

void validate(const FWGenConfig &cfg);

struct LossBreakdown {
  /// Sums over the batch, not means.
  double l_benign = 0.0;
  double l_marked = 0.0;
  double l_total = 0.0;
  /// l_total / batch size; the scale the optimizer step uses.
  double l_total_mean = 0.0;
};

/// -sum_j q_j log max(p_j, 1e-12).
double cross_entropy(std::span<const double> q, std::span<const double> p);

/// One distillation term summed over a batch, for an explicit forged
/// pattern. hard_label, when set, replaces every sample's label in the
/// one-hot term. When grad_pattern is non-null, d(loss)/d(pattern) is
/// accumulated into it.
double distillation_loss(const Classifier &model,
                         std::span<const Sample> batch, const Watermark &t_ow,
                         const ImageTensor &forged_pattern, double temperature,
                         double alpha, std::optional<int> hard_label,
                         Tensor *grad_pattern = nullptr);

/// Forged watermark: the pattern with t_ow's blend map and target label.
Watermark forged_from(const ImageTensor &pattern, const Watermark &t_ow);

/// L_B for the generator's output on `noise`.
double loss_benign(const Generator &gen, const Tensor &noise,
                   const Classifier &model_benign, std::span<const Sample> batch,
                   const Watermark &t_ow, const FWGenConfig &cfg);
/// L_W for the generator's output on `noise` (one-hot uses t_ow's target).
double loss_marked(const Generator &gen, const Tensor &noise,
                   const Classifier &model_marked, std::span<const Sample> batch,
                   const Watermark &t_ow, const FWGenConfig &cfg);

/// Loss breakdown for one batch; accumulates d(l_total)/d(generator params)
/// (batch sum, not mean) into param_grad when non-empty.
LossBreakdown fwgen_loss_and_gradient(const Generator &gen, const Tensor &noise,
                                      const Classifier &model_benign,
                                      const Classifier &model_marked,
                                      std::span<const Sample> batch,
                                      const Watermark &t_ow,
                                      const FWGenConfig &cfg,
                                      std::span<double> param_grad);

struct FWGenResult {
  Generator generator;
  Watermark forged;
  std::vector<LossBreakdown> trace;
};

/// Runs cfg.iterations AdamW steps on minibatches of benign_ds. The forged
/// watermark is the generator's output on the fixed noise drawn from
/// derive_seed(cfg.seed, "noise"). Throws DivergenceError (step =
/// iteration) on a non-finite loss.
FWGenResult train_fwgen(const Classifier &model_benign,
                        const Classifier &model_marked,
                        const LabeledDataset &benign_ds, const Watermark &t_ow,
                        const FWGenConfig &cfg);

/// Pattern = generator output on noise drawn from seed; blend map and
/// target label copied from template_wm; kind = forged.
Watermark sample_forged_watermark(const Generator &gen, RngSeed seed,
                                  const Watermark &template_wm);

/// The noise seed train_fwgen uses for its returned watermark.
RngSeed forged_noise_seed(const FWGenConfig &cfg);

} // namespace dovforge

#endif // DOVFORGE_FWGEN_HPP
