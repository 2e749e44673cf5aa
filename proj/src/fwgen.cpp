// SPDX-License-Identifier: Apache-2.0
#include <dovforge/error.hpp>
#include <dovforge/fwgen.hpp>
#include <dovforge/optim.hpp>
#include <dovforge/parallel.hpp>
#include <dovforge/watermarking.hpp>

#include <algorithm>
#include <cmath>

namespace dovforge {

namespace {

constexpr double kProbFloor = 1e-12;
constexpr int kStages = 5;

} // namespace

LossMode loss_mode_from_string(std::string_view s) {
  if (s == "LB" || s == "L_B")
    return LossMode::benign;
  if (s == "LW" || s == "L_W")
    return LossMode::marked;
  if (s == "LBW" || s == "L_BW" || s == "LWB" || s == "L_WB")
    return LossMode::both;
  throw ConfigError("unknown loss mode '" + std::string(s) +
                    "' (expected LB, LW or LBW)");
}

std::string to_string(LossMode mode) {
  switch (mode) {
  case LossMode::benign:
    return "LB";
  case LossMode::marked:
    return "LW";
  default:
    return "LBW";
  }
}

Generator::Generator(const Shape &image_shape, GeneratorArch arch,
                     RngSeed init_seed) {
  if (arch.width <= 0 || arch.latent_channels <= 0)
    throw ConfigError("generator widths must be positive");
  std::vector<std::shared_ptr<const nn::Layer>> layers;
  // Encoder: noise -> latent z.
  for (int i = 0; i < kStages; ++i) {
    layers.push_back(
        nn::conv3x3(i + 1 < kStages ? arch.width : arch.latent_channels));
    layers.push_back(nn::relu());
  }
  // Decoder: z -> pattern. The last stage starts near mid-gray so the clamp
  // is inactive at initialization.
  for (int i = 0; i < kStages; ++i) {
    if (i + 1 < kStages)
      layers.push_back(nn::conv3x3(arch.width));
    else
      layers.push_back(nn::conv3x3(image_shape.channels, arch.output_gain, 0.5));
    layers.push_back(nn::relu());
  }
  layers.push_back(nn::clamp01());
  net_ = nn::Sequential(image_shape, std::move(layers));
  Rng rng(init_seed);
  net_.init(rng);
}

ImageTensor Generator::generate(const Tensor &noise) const {
  return ImageTensor::clamped(net_.forward(noise));
}

Tensor draw_noise(const Shape &shape, RngSeed seed) {
  Rng rng(seed);
  Tensor t(shape);
  for (double &v : t.values())
    v = rng.normal();
  return t;
}

void validate(const FWGenConfig &cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0))
    throw ConfigError("alpha must be in [0,1]");
  if (!(cfg.temperature_benign > 0.0) || !(cfg.temperature_marked > 0.0))
    throw ConfigError("temperatures must be positive");
  if (!(cfg.learning_rate > 0.0))
    throw ConfigError("learning rate must be positive");
  if (cfg.iterations < 0)
    throw ConfigError("iterations must be non-negative");
  if (cfg.batch_size <= 0)
    throw ConfigError("batch size must be positive");
}

double cross_entropy(std::span<const double> q, std::span<const double> p) {
  if (q.size() != p.size())
    throw ShapeError("cross_entropy: length mismatch (" +
                     std::to_string(q.size()) + " vs " +
                     std::to_string(p.size()) + ")");
  double ce = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j)
    if (q[j] != 0.0)
      ce -= q[j] * std::log(std::max(p[j], kProbFloor));
  return ce;
}

Watermark forged_from(const ImageTensor &pattern, const Watermark &t_ow) {
  return Watermark(pattern, t_ow.blend_map(), t_ow.target_label(),
                   WatermarkKind::forged);
}

double distillation_loss(const Classifier &model, std::span<const Sample> batch,
                         const Watermark &t_ow, const ImageTensor &forged_pattern,
                         double temperature, double alpha,
                         std::optional<int> hard_label, Tensor *grad_pattern) {
  if (batch.empty())
    throw EmptyInputError("distillation loss on an empty batch");
  const Watermark t_fw = forged_from(forged_pattern, t_ow);
  const int k = model.num_classes();
  const double t2 = temperature * temperature;

  std::vector<double> losses(batch.size());
  std::vector<Tensor> grads(grad_pattern ? batch.size() : 0);

  parallel_for(batch.size(), [&](std::size_t i) {
    const Sample &s = batch[i];
    const int label = hard_label.value_or(s.label);
    if (label < 0 || label >= k)
      throw ConfigError("one-hot label outside [0,K)");

    nn::Sequential::Trace trace;
    model.network().forward(embed(s.image, t_fw).tensor(), trace);
    const auto &logits = trace.acts.back().values();
    const auto p_t = softmax(logits, temperature);
    const auto p_1 = softmax(logits, 1.0);

    std::vector<double> q;
    double soft = 0.0;
    if (alpha > 0.0) {
      q = model.predict_proba(embed(s.image, t_ow).tensor(), temperature);
      soft = cross_entropy(q, p_t);
    }
    const double hard = -std::log(std::max(p_1[label], kProbFloor));
    losses[i] = alpha * t2 * soft + (1.0 - alpha) * hard;
    if (!std::isfinite(losses[i]))
      throw NumericError("non-finite distillation loss at batch index " +
                         std::to_string(i));

    if (!grad_pattern)
      return;
    Tensor gs(trace.acts.back().shape(), 0.0);
    if (alpha > 0.0) {
      // Only unclamped probabilities contribute to d CE / d logits.
      double q_live = 0.0;
      for (int j = 0; j < k; ++j)
        if (p_t[j] >= kProbFloor)
          q_live += q[j];
      for (int j = 0; j < k; ++j) {
        const double live_q = p_t[j] >= kProbFloor ? q[j] : 0.0;
        gs[j] += alpha * temperature * (p_t[j] * q_live - live_q);
      }
    }
    if (p_1[label] >= kProbFloor)
      for (int j = 0; j < k; ++j)
        gs[j] += (1.0 - alpha) * (p_1[j] - (j == label ? 1.0 : 0.0));

    Tensor gx;
    model.network().backward(trace, gs, {}, &gx);
    const auto &rho = t_ow.blend_map();
    for (std::size_t e = 0; e < gx.size(); ++e)
      gx[e] *= 1.0 - rho[e];
    grads[i] = std::move(gx);
  });

  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    total += losses[i];
    if (grad_pattern)
      for (std::size_t e = 0; e < grad_pattern->size(); ++e)
        (*grad_pattern)[e] += grads[i][e];
  }
  return total;
}

double loss_benign(const Generator &gen, const Tensor &noise,
                   const Classifier &model_benign, std::span<const Sample> batch,
                   const Watermark &t_ow, const FWGenConfig &cfg) {
  return distillation_loss(model_benign, batch, t_ow, gen.generate(noise),
                           cfg.temperature_benign, cfg.alpha, std::nullopt);
}

double loss_marked(const Generator &gen, const Tensor &noise,
                   const Classifier &model_marked, std::span<const Sample> batch,
                   const Watermark &t_ow, const FWGenConfig &cfg) {
  return distillation_loss(model_marked, batch, t_ow, gen.generate(noise),
                           cfg.temperature_marked, cfg.alpha,
                           t_ow.target_label());
}

LossBreakdown fwgen_loss_and_gradient(const Generator &gen, const Tensor &noise,
                                      const Classifier &model_benign,
                                      const Classifier &model_marked,
                                      std::span<const Sample> batch,
                                      const Watermark &t_ow,
                                      const FWGenConfig &cfg,
                                      std::span<double> param_grad) {
  nn::Sequential::Trace trace;
  gen.network().forward(noise, trace);
  const ImageTensor pattern = ImageTensor::clamped(trace.acts.back());

  const bool want_grad = !param_grad.empty();
  const bool use_b = cfg.loss_mode != LossMode::marked;
  const bool use_w = cfg.loss_mode != LossMode::benign;
  Tensor gp(pattern.shape(), 0.0);

  LossBreakdown out;
  out.l_benign = distillation_loss(model_benign, batch, t_ow, pattern,
                                   cfg.temperature_benign, cfg.alpha,
                                   std::nullopt,
                                   want_grad && use_b ? &gp : nullptr);
  out.l_marked = distillation_loss(model_marked, batch, t_ow, pattern,
                                   cfg.temperature_marked, cfg.alpha,
                                   t_ow.target_label(),
                                   want_grad && use_w ? &gp : nullptr);
  out.l_total = (use_b ? out.l_benign : 0.0) + (use_w ? out.l_marked : 0.0);
  out.l_total_mean = out.l_total / static_cast<double>(batch.size());

  if (want_grad)
    gen.network().backward(trace, gp, param_grad, nullptr);
  return out;
}

RngSeed forged_noise_seed(const FWGenConfig &cfg) {
  return derive_seed(cfg.seed, "noise");
}

Watermark sample_forged_watermark(const Generator &gen, RngSeed seed,
                                  const Watermark &template_wm) {
  require_same_shape(gen.shape(), template_wm.shape(), "forged watermark");
  return forged_from(gen.generate(draw_noise(gen.shape(), seed)), template_wm);
}

FWGenResult train_fwgen(const Classifier &model_benign,
                        const Classifier &model_marked,
                        const LabeledDataset &benign_ds, const Watermark &t_ow,
                        const FWGenConfig &cfg) {
  validate(cfg);
  if (benign_ds.empty())
    throw EmptyInputError("train_fwgen: empty benign dataset");
  if (static_cast<std::size_t>(cfg.batch_size) > benign_ds.size())
    throw ConfigError("FW-Gen batch size exceeds dataset size");
  const Shape shape = benign_ds.image_shape();
  require_same_shape(t_ow.shape(), shape, "original watermark");
  require_same_shape(model_benign.input_shape(), shape, "benign model input");
  require_same_shape(model_marked.input_shape(), shape, "marked model input");
  if (model_marked.num_classes() <= t_ow.target_label())
    throw ConfigError("target label outside the marked model's classes");

  FWGenResult out;
  out.generator = Generator(shape, cfg.arch, derive_seed(cfg.seed, "generator"));
  const Tensor fixed_noise = draw_noise(shape, forged_noise_seed(cfg));

  auto opt = nn::make_optimizer(nn::OptimizerKind::adamw, cfg.learning_rate);
  Rng batches(derive_seed(cfg.seed, "batches"));
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  std::vector<double> grad(out.generator.network().param_count());
  std::vector<Sample> batch;

  for (int it = 0; it < cfg.iterations; ++it) {
    batch.clear();
    while (batch.size() < static_cast<std::size_t>(cfg.batch_size)) {
      if (cursor == order.size()) {
        order = batches.permutation(benign_ds.size());
        cursor = 0;
      }
      batch.push_back(benign_ds[order[cursor++]]);
    }

    const Tensor noise =
        cfg.resample_noise
            ? draw_noise(shape, derive_seed(cfg.seed,
                                            "noise/" + std::to_string(it)))
            : fixed_noise;
    std::fill(grad.begin(), grad.end(), 0.0);
    LossBreakdown lb;
    try {
      lb = fwgen_loss_and_gradient(out.generator, noise, model_benign,
                                   model_marked, batch, t_ow, cfg, grad);
    } catch (const NumericError &e) {
      throw DivergenceError("FW-Gen iteration " + std::to_string(it) + ": " +
                                e.what(),
                            it);
    }
    if (!std::isfinite(lb.l_total))
      throw DivergenceError("non-finite FW-Gen loss at iteration " +
                                std::to_string(it),
                            it);
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (double &g : grad)
      g *= scale;
    opt->step(out.generator.mutable_network().mutable_params(), grad);
    out.trace.push_back(lb);
  }

  out.forged =
      sample_forged_watermark(out.generator, forged_noise_seed(cfg), t_ow);
  return out;
}

} // namespace dovforge
