// SPDX-License-Identifier: Apache-2.0
// Shared fixtures for the unit tests.
#ifndef DOVFORGE_TESTS_HELPERS_HPP
#define DOVFORGE_TESTS_HELPERS_HPP

#include <dovforge/classifier.hpp>
#include <dovforge/dataset.hpp>
#include <dovforge/error.hpp>
#include <dovforge/nn.hpp>
#include <dovforge/rng.hpp>
#include <dovforge/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace testing {

using namespace dovforge;

inline ImageTensor random_image(const Shape &s, Rng &rng) {
  std::vector<double> v(s.size());
  for (double &x : v)
    x = rng.uniform();
  return ImageTensor(s, std::move(v));
}

inline ImageTensor constant_image(const Shape &s, double c) {
  return ImageTensor(s, std::vector<double>(s.size(), c));
}

/// Two Gaussian blobs in pixel space: class 0 dark, class 1 bright.
inline LabeledDataset separable_blobs(std::size_t n, const Shape &s, RngSeed seed) {
  Rng rng(seed);
  std::vector<Sample> items;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    std::vector<double> v(s.size());
    for (double &x : v)
      x = std::clamp((label ? 0.75 : 0.25) + 0.08 * rng.normal(), 0.0, 1.0);
    items.push_back({ImageTensor(s, std::move(v)), label});
  }
  return LabeledDataset(std::move(items), 2, "blobs");
}

/// Random images with labels cycling 0..K-1.
inline LabeledDataset random_dataset(std::size_t n, const Shape &s, int k, RngSeed seed) {
  Rng rng(seed);
  std::vector<Sample> items;
  for (std::size_t i = 0; i < n; ++i)
    items.push_back({random_image(s, rng), static_cast<int>(i % k)});
  return LabeledDataset(std::move(items), k, "random");
}

/// A classifier with one linear layer whose weights are set explicitly
/// (row-major K x D, then K biases).
inline Classifier linear_classifier(const Shape &s, int k, std::vector<double> params) {
  nn::Sequential net(s, {nn::linear(k)});
  auto p = net.mutable_params();
  std::copy(params.begin(), params.end(), p.begin());
  return Classifier(Architecture::mlp, std::move(net), k);
}

/// Always predicts `label` regardless of the input.
inline Classifier constant_classifier(const Shape &s, int k, int label) {
  std::vector<double> p(static_cast<std::size_t>(k) * s.size() + k, 0.0);
  p[static_cast<std::size_t>(k) * s.size() + label] = 10.0;
  return linear_classifier(s, k, std::move(p));
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / ("dovforge-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Scoped DOVFORGE_THREADS override.
class ThreadsEnv {
public:
  explicit ThreadsEnv(int n) {
    if (const char *v = std::getenv("DOVFORGE_THREADS"))
      old_ = v;
    setenv("DOVFORGE_THREADS", std::to_string(n).c_str(), 1);
  }
  ~ThreadsEnv() {
    if (old_.empty())
      unsetenv("DOVFORGE_THREADS");
    else
      setenv("DOVFORGE_THREADS", old_.c_str(), 1);
  }

private:
  std::string old_;
};

/// Share of coordinates where analytic and central-difference gradients
/// agree within rel_tol relative error (abs floor guards tiny values).
template <class LossFn>
double gradient_agreement(std::span<double> params, std::span<const double> analytic,
                          const std::vector<std::size_t> &coords, LossFn loss,
                          double h = 1e-5, double rel_tol = 1e-3) {
  std::size_t ok = 0;
  for (std::size_t c : coords) {
    const double saved = params[c];
    params[c] = saved + h;
    const double up = loss();
    params[c] = saved - h;
    const double down = loss();
    params[c] = saved;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[c]), 1e-6});
    if (std::abs(numeric - analytic[c]) / denom <= rel_tol)
      ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(coords.size());
}

} // namespace testing

#endif // DOVFORGE_TESTS_HELPERS_HPP
