// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"

#include <dovforge/optim.hpp>
#include <dovforge/parallel.hpp>
#include <dovforge/training.hpp>

#include <doctest.h>

#include <numeric>

using namespace dovforge;
using namespace testing;

TEST_SUITE("training") {

TEST_CASE("softmax cross-entropy value and gradient") {
  const std::vector<double> logits{2.0, 0.0, -1.0};
  std::vector<double> grad(3);
  const double loss = softmax_cross_entropy(logits, 0, grad);
  const auto p = softmax(logits);
  CHECK(loss == doctest::Approx(-std::log(p[0])).epsilon(1e-12));
  CHECK(grad[0] == doctest::Approx(p[0] - 1.0).epsilon(1e-12));
  CHECK(grad[1] == doctest::Approx(p[1]).epsilon(1e-12));
  CHECK(grad[2] == doctest::Approx(p[2]).epsilon(1e-12));
}

TEST_CASE("classifier gradient matches central differences") {
  const Shape s{2, 8, 8};
  const auto ds = random_dataset(6, s, 3, RngSeed{21});
  for (Architecture arch : {Architecture::small_cnn, Architecture::mlp}) {
    Classifier model(arch, s, 3, RngSeed{22});
    std::vector<std::size_t> batch(ds.size());
    std::iota(batch.begin(), batch.end(), 0);
    std::vector<double> grad(model.network().param_count(), 0.0);
    batch_loss_and_gradient(model, ds, batch, grad);

    Rng rng(RngSeed{23});
    std::vector<std::size_t> coords;
    for (int i = 0; i < 200; ++i)
      coords.push_back(rng.below(grad.size()));
    auto params = model.mutable_network().mutable_params();
    const double agree = gradient_agreement(params, grad, coords, [&] {
      std::vector<double> none;
      return batch_loss_and_gradient(model, ds, batch, none);
    });
    CAPTURE(to_string(arch));
    CHECK(agree >= 0.95);
  }
}

TEST_CASE("training fits separable blobs") {
  const Shape s{1, 6, 6};
  const auto ds = separable_blobs(100, s, RngSeed{1});
  TrainLog log;
  TrainConfig cfg{.epochs = 20, .batch_size = 10, .learning_rate = 0.01, .seed = RngSeed{2},
                  .architecture = Architecture::mlp};
  const auto model = train_classifier(ds, cfg, &log);
  CHECK(evaluate_accuracy(model, ds) >= 0.99);
  REQUIRE(log.epoch_loss.size() == 20);
  CHECK(mean_cross_entropy(model, ds) < log.initial_loss);
}

TEST_CASE("sgd also decreases the loss") {
  const Shape s{1, 6, 6};
  const auto ds = separable_blobs(60, s, RngSeed{3});
  TrainLog log;
  TrainConfig cfg{.epochs = 5, .batch_size = 10, .learning_rate = 0.05,
                  .optimizer = nn::OptimizerKind::sgd, .seed = RngSeed{4},
                  .architecture = Architecture::mlp};
  const auto model = train_classifier(ds, cfg, &log);
  CHECK(mean_cross_entropy(model, ds) < log.initial_loss);
}

TEST_CASE("zero epochs return the initialized model") {
  const Shape s{1, 6, 6};
  const auto ds = random_dataset(100, s, 10, RngSeed{5});
  TrainConfig cfg{.epochs = 0, .seed = RngSeed{6}, .architecture = Architecture::mlp};
  const auto model = train_classifier(ds, cfg);
  Classifier init(Architecture::mlp, s, 10, derive_seed(RngSeed{6}, "init"));
  init.round_to_float32();
  CHECK(model == init);
  const double acc = evaluate_accuracy(model, ds);
  CHECK(acc <= 0.3);
}

TEST_CASE("training is deterministic across thread counts") {
  const Shape s{3, 8, 8};
  const auto ds = random_dataset(64, s, 4, RngSeed{7});
  TrainConfig cfg{.epochs = 2, .batch_size = 16, .seed = RngSeed{8}};
  Classifier one, many, again;
  {
    ThreadsEnv env(1);
    CHECK(thread_count() == 1);
    one = train_classifier(ds, cfg);
  }
  {
    ThreadsEnv env(4);
    CHECK(thread_count() == 4);
    many = train_classifier(ds, cfg);
    again = train_classifier(ds, cfg);
  }
  CHECK(one == many);
  CHECK(many == again);
}

TEST_CASE("evaluate_accuracy matches a per-sample loop") {
  const Shape s{1, 4, 4};
  const auto ds = random_dataset(50, s, 10, RngSeed{9});
  const auto always0 = constant_classifier(s, 10, 0);
  CHECK(evaluate_accuracy(always0, ds) == doctest::Approx(0.1));

  std::vector<Sample> zeros;
  for (const auto &x : ds.items())
    zeros.push_back({x.image, 0});
  CHECK(evaluate_accuracy(always0, LabeledDataset(zeros, 10, "z")) == 1.0);

  Classifier model(Architecture::mlp, s, 10, RngSeed{10});
  std::size_t hits = 0;
  for (const auto &x : ds.items())
    hits += predict_label(model, x.image) == x.label;
  CHECK(evaluate_accuracy(model, ds) == static_cast<double>(hits) / ds.size());

  CHECK_THROWS_AS(evaluate_accuracy(model, LabeledDataset{}), EmptyInputError);
}

TEST_CASE("invalid training configs are rejected") {
  const auto ds = random_dataset(10, Shape{1, 4, 4}, 2, RngSeed{1});
  CHECK_THROWS_AS(train_classifier(ds, TrainConfig{.learning_rate = 0.0}), ConfigError);
  CHECK_THROWS_AS(train_classifier(ds, TrainConfig{.batch_size = 11}), ConfigError);
}

} // TEST_SUITE
