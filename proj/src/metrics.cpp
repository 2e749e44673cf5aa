// SPDX-License-Identifier: Apache-2.0
#include <dovforge/error.hpp>
#include <dovforge/metrics.hpp>
#include <dovforge/parallel.hpp>
#include <dovforge/watermarking.hpp>

#include <algorithm>
#include <cmath>

namespace dovforge {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n) * n);
  const double mid = (n - 1) / 2.0;
  double sum = 0.0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double dy = y - mid, dx = x - mid;
      sum += w[y * n + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
    }
  for (double &v : w)
    v /= sum;
  return w;
}

} // namespace

double mse(const ImageTensor &a, const ImageTensor &b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  if (a.size() == 0)
    throw EmptyInputError("mse of empty images");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double psnr(const ImageTensor &a, const ImageTensor &b) {
  const double m = mse(a, b);
  if (m < 1e-12)
    return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

SsimResult ssim_ex(const ImageTensor &a, const ImageTensor &b) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  const Shape &s = a.shape();
  if (s.size() == 0)
    throw EmptyInputError("ssim of empty images");
  SsimResult r;
  int n = std::min({kWindow, s.height, s.width});
  if (n % 2 == 0)
    --n;
  r.window = n;
  r.window_shrunk = n != kWindow;
  const auto w = gaussian_window(n);

  double total = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < s.channels; ++c)
    for (int y0 = 0; y0 + n <= s.height; ++y0)
      for (int x0 = 0; x0 + n <= s.width; ++x0) {
        double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
        for (int y = 0; y < n; ++y)
          for (int x = 0; x < n; ++x) {
            const double wt = w[y * n + x];
            const double va = a.at(c, y0 + y, x0 + x);
            const double vb = b.at(c, y0 + y, x0 + x);
            ma += wt * va;
            mb += wt * vb;
            aa += wt * va * va;
            bb += wt * vb * vb;
            ab += wt * va * vb;
          }
        const double va = std::max(0.0, aa - ma * ma);
        const double vb = std::max(0.0, bb - mb * mb);
        const double cov = ab - ma * mb;
        total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) /
                 ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
        ++count;
      }
  r.value = a == b ? 1.0 : total / static_cast<double>(count);
  return r;
}

QualityTriple quality(const ImageTensor &a, const ImageTensor &b) {
  return {psnr(a, b), mse(a, b), ssim(a, b)};
}

double wsr(const Classifier &model, const LabeledDataset &probe, const Watermark &wm) {
  const int target = wm.target_label();
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < probe.size(); ++i)
    if (probe[i].label != target)
      idx.push_back(i);
  if (idx.empty())
    throw EmptyInputError("wsr: no probe outside the target class");
  std::vector<char> hit(idx.size(), 0);
  parallel_for(idx.size(), [&](std::size_t i) {
    hit[i] = predict_label(model, embed(probe[idx[i]].image, wm)) == target;
  });
  return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) /
         static_cast<double>(idx.size());
}

} // namespace dovforge
