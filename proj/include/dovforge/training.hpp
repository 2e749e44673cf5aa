// SPDX-License-Identifier: Apache-2.0
/**
 * @file   training.hpp
 * @brief  Minibatch cross-entropy training and accuracy evaluation.
 */
#ifndef DOVFORGE_TRAINING_HPP
#define DOVFORGE_TRAINING_HPP

#include <dovforge/classifier.hpp>
#include <dovforge/dataset.hpp>
#include <dovforge/optim.hpp>

#include <span>
#include <vector>

namespace dovforge {

struct TrainConfig {
  int epochs = 12;
  int batch_size = 32;
  double learning_rate = 0.002;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adamw;
  double weight_decay = 0.01;
  RngSeed seed{};
  Architecture architecture = Architecture::small_cnn;
  /// Anneal the rate per epoch along a half cosine, from lr down to 0.
  bool cosine_decay = false;
};

struct TrainLog {
  /// Mean training cross-entropy of the initialized model.
  double initial_loss = 0.0;
  /// Mean minibatch loss per epoch, observed during the epoch.
  std::vector<double> epoch_loss;
};

/// Softmax cross-entropy of one logit vector against a class index;
/// writes d(loss)/d(logits) when grad is non-empty.
double softmax_cross_entropy(std::span<const double> logits, int label,
                             std::span<double> grad = {});

/// Sum over `indices` of the per-sample cross-entropy; accumulates the
/// summed parameter gradient into `grad`. The reduction order is fixed by
/// `indices` regardless of thread count.
double batch_loss_and_gradient(const Classifier &model, const LabeledDataset &ds,
                               std::span<const std::size_t> indices,
                               std::span<double> grad);

double mean_cross_entropy(const Classifier &model, const LabeledDataset &ds);

/// Deterministic given cfg.seed. Parameters are rounded to float32 at the
/// end so the returned model equals its saved form. Throws DivergenceError
/// (step = epoch) on a non-finite loss.
Classifier train_classifier(const LabeledDataset &ds, const TrainConfig &cfg,
                            TrainLog *log = nullptr);

/// Fraction of samples whose predicted label equals the stored label.
double evaluate_accuracy(const Classifier &model, const LabeledDataset &ds);

} // namespace dovforge

#endif // DOVFORGE_TRAINING_HPP
