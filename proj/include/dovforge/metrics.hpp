// SPDX-License-Identifier: Apache-2.0
/**
 * @file   metrics.hpp
 * @brief  Image-quality measures (MSE, PSNR, SSIM) and the watermark
 *         success rate.
 */
#ifndef DOVFORGE_METRICS_HPP
#define DOVFORGE_METRICS_HPP

#include <dovforge/classifier.hpp>
#include <dovforge/dataset.hpp>
#include <dovforge/watermark.hpp>

namespace dovforge {

/// PSNR reported for (near-)identical images.
inline constexpr double kPsnrCap = 120.0;

double mse(const ImageTensor &a, const ImageTensor &b);

/// 10 log10(1 / mse), or kPsnrCap when mse < 1e-12.
double psnr(const ImageTensor &a, const ImageTensor &b);

struct SsimResult {
  double value = 1.0;
  /// Window side actually used: min(11, H, W) rounded down to odd.
  int window = 11;
  bool window_shrunk = false;
};

/// Single-scale SSIM, Gaussian window sigma 1.5, C1 = 1e-4, C2 = 9e-4,
/// averaged over channels and all valid window positions.
SsimResult ssim_ex(const ImageTensor &a, const ImageTensor &b);
inline double ssim(const ImageTensor &a, const ImageTensor &b) {
  return ssim_ex(a, b).value;
}

struct QualityTriple {
  double psnr = kPsnrCap;
  double mse = 0.0;
  double ssim = 1.0;
};

QualityTriple quality(const ImageTensor &a, const ImageTensor &b);

/// Share of probes, excluding those labeled wm.target_label(), that the
/// model assigns to the target after embedding. Throws EmptyInputError if
/// no probe remains.
double wsr(const Classifier &model, const LabeledDataset &probe, const Watermark &wm);

} // namespace dovforge

#endif // DOVFORGE_METRICS_HPP
