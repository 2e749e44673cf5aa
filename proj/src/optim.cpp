// SPDX-License-Identifier: Apache-2.0
#include <dovforge/error.hpp>
#include <dovforge/optim.hpp>

#include <cmath>

namespace dovforge::nn {

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::sgd ? "sgd" : "adamw";
}

OptimizerKind optimizer_kind_from_string(std::string_view s) {
  if (s == "sgd")
    return OptimizerKind::sgd;
  if (s == "adamw")
    return OptimizerKind::adamw;
  throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

void Sgd::step(std::span<double> params, std::span<const double> grads) {
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i] -= lr_ * grads[i];
}

void AdamW::step(std::span<double> params, std::span<const double> grads) {
  if (m_.size() != params.size()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
    t_ = 0;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * g;
    v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * g * g;
    params[i] -= opts_.lr * opts_.weight_decay * params[i];
    params[i] -= opts_.lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + opts_.eps);
  }
}

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr,
                                          double weight_decay) {
  if (!(lr > 0.0))
    throw ConfigError("learning rate must be positive");
  if (kind == OptimizerKind::sgd)
    return std::make_unique<Sgd>(lr);
  AdamW::Options o;
  o.lr = lr;
  o.weight_decay = weight_decay;
  return std::make_unique<AdamW>(o);
}

} // namespace dovforge::nn
