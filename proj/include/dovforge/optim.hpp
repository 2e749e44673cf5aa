// SPDX-License-Identifier: Apache-2.0
/**
 * @file   optim.hpp
 * @brief  SGD and AdamW over flat parameter vectors.
 */
#ifndef DOVFORGE_OPTIM_HPP
#define DOVFORGE_OPTIM_HPP

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dovforge::nn {

enum class OptimizerKind { sgd, adamw };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(std::string_view s);

class Optimizer {
public:
  virtual ~Optimizer() = default;
  virtual void step(std::span<double> params, std::span<const double> grads) = 0;
  virtual void set_learning_rate(double lr) = 0;
};

class Sgd final : public Optimizer {
public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(std::span<double> params, std::span<const double> grads) override;
  void set_learning_rate(double lr) override { lr_ = lr; }

private:
  double lr_;
};

/// Adam with decoupled weight decay (Loshchilov & Hutter).
class AdamW final : public Optimizer {
public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  explicit AdamW(Options opts) : opts_(opts) {}
  void step(std::span<double> params, std::span<const double> grads) override;
  void set_learning_rate(double lr) override { opts_.lr = lr; }

private:
  Options opts_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr,
                                          double weight_decay = 0.01);

} // namespace dovforge::nn

#endif // DOVFORGE_OPTIM_HPP
