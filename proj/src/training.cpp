// SPDX-License-Identifier: Apache-2.0
#include <dovforge/error.hpp>
#include <dovforge/parallel.hpp>
#include <dovforge/training.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace dovforge {

double softmax_cross_entropy(std::span<const double> logits, int label,
                             std::span<double> grad) {
  const auto p = softmax(logits);
  const double loss = -std::log(std::max(p[label], 1e-300));
  if (!grad.empty()) {
    for (std::size_t k = 0; k < p.size(); ++k)
      grad[k] = p[k] - (static_cast<int>(k) == label ? 1.0 : 0.0);
  }
  return loss;
}

double batch_loss_and_gradient(const Classifier &model, const LabeledDataset &ds,
                               std::span<const std::size_t> indices,
                               std::span<double> grad) {
  const auto &net = model.network();
  const std::size_t np = net.param_count();
  const std::size_t n = indices.size();
  std::vector<double> losses(n, 0.0);
  std::vector<std::vector<double>> per_sample(n);

  parallel_for(n, [&](std::size_t b) {
    const auto &s = ds[indices[b]];
    nn::Sequential::Trace trace;
    net.forward(s.image.tensor(), trace);
    const Tensor &out = trace.acts.back();
    Tensor gout(out.shape());
    losses[b] = softmax_cross_entropy(out.values(), s.label, gout.values());
    if (!grad.empty()) {
      per_sample[b].assign(np, 0.0);
      net.backward(trace, gout, per_sample[b], nullptr);
    }
  });

  double total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    total += losses[b];
    if (!grad.empty())
      for (std::size_t j = 0; j < np; ++j)
        grad[j] += per_sample[b][j];
  }
  return total;
}

double mean_cross_entropy(const Classifier &model, const LabeledDataset &ds) {
  if (ds.empty())
    throw EmptyInputError("mean_cross_entropy: empty dataset");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  return batch_loss_and_gradient(model, ds, idx, {}) /
         static_cast<double>(ds.size());
}

Classifier train_classifier(const LabeledDataset &ds, const TrainConfig &cfg,
                            TrainLog *log) {
  if (ds.empty())
    throw EmptyInputError("train_classifier: empty dataset");
  if (cfg.epochs < 0)
    throw ConfigError("epochs must be non-negative");
  if (cfg.batch_size <= 0 || static_cast<std::size_t>(cfg.batch_size) > ds.size())
    throw ConfigError("batch size must be in [1, N]");
  if (!(cfg.learning_rate > 0.0))
    throw ConfigError("learning rate must be positive");

  Classifier model(cfg.architecture, ds.image_shape(), ds.num_classes(),
                   derive_seed(cfg.seed, "init"));
  if (log)
    log->initial_loss = mean_cross_entropy(model, ds);

  auto opt = nn::make_optimizer(cfg.optimizer, cfg.learning_rate,
                                cfg.weight_decay);
  Rng shuffle(derive_seed(cfg.seed, "shuffle"));
  std::vector<double> grad(model.network().param_count());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.cosine_decay)
      opt->set_learning_rate(cfg.learning_rate * 0.5 *
                             (1.0 + std::cos(std::numbers::pi * epoch / cfg.epochs)));
    const auto order = shuffle.permutation(ds.size());
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::span<const std::size_t> batch(order.data() + start, end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double loss = batch_loss_and_gradient(model, ds, batch, grad);
      if (!std::isfinite(loss))
        throw DivergenceError("non-finite training loss in epoch " +
                                  std::to_string(epoch),
                              epoch);
      const double scale = 1.0 / static_cast<double>(batch.size());
      for (double &g : grad)
        g *= scale;
      opt->step(model.mutable_network().mutable_params(), grad);
      epoch_loss += loss;
    }
    if (log)
      log->epoch_loss.push_back(epoch_loss / static_cast<double>(ds.size()));
  }

  model.round_to_float32();
  return model;
}

double evaluate_accuracy(const Classifier &model, const LabeledDataset &ds) {
  if (ds.empty())
    throw EmptyInputError("evaluate_accuracy: empty dataset");
  std::vector<char> hit(ds.size(), 0);
  parallel_for(ds.size(), [&](std::size_t i) {
    hit[i] = predict_label(model, ds[i].image) == ds[i].label;
  });
  const auto correct = std::count(hit.begin(), hit.end(), 1);
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

} // namespace dovforge
