// SPDX-License-Identifier: Apache-2.0
/**
 * @file   stats.hpp
 * @brief  One-sided hypothesis tests used for ownership verification:
 *         paired T-test with margin, Wilcoxon signed-rank, and the mean
 *         target-probability gap.
 */
#ifndef DOVFORGE_STATS_HPP
#define DOVFORGE_STATS_HPP

#include <span>

namespace dovforge::stats {

/// Regularized incomplete beta I_x(a, b) by Lentz continued fraction.
double incomplete_beta(double a, double b, double x);

/// Upper tail P(T_df >= t) of Student's t distribution.
double student_t_sf(double t, double df);

/// Upper tail P(Z >= z) of the standard normal.
double normal_sf(double z);

struct TTestResult {
  double p_value = 1.0;
  double t_statistic = 0.0;
  double mean_difference = 0.0;
  double sd_difference = 0.0;
  int df = 0;
  /// All differences identical; p is 0 when their mean is positive, else 1.
  bool degenerate = false;
};

/// H0: p + tau = p~ against H1: p + tau < p~ on paired samples, with
/// d_i = marked_i - (benign_i + tau). Throws SampleSizeError for n < 2 and
/// ShapeError for unequal lengths.
TTestResult paired_t_test(std::span<const double> benign_at_target,
                          std::span<const double> marked_at_target, double tau);

struct WilcoxonResult {
  double p_value = 1.0;
  /// Sum of (mid)ranks of positive differences.
  double w_plus = 0.0;
  /// Sample size after dropping zero differences.
  int n_effective = 0;
  bool exact = false;
};

/// Largest post-drop sample size that uses exact enumeration.
inline constexpr int kWilcoxonExactLimit = 12;

/// One-sided signed-rank test of median(d) > 0. Zeros are dropped, ties
/// get midranks. Exact null distribution for n <= 12, otherwise a normal
/// approximation with tie-corrected variance and continuity correction.
/// All-zero input yields p = 1.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences);

/// d_i = [pred_i == target] - 1/K, then wilcoxon_signed_rank.
/// Throws SampleSizeError for n < 2.
WilcoxonResult wilcoxon_test(std::span<const int> predictions, int target_label,
                             int num_classes);

/// Mean of marked_i - benign_i. Throws ShapeError on length mismatch and
/// EmptyInputError on empty input.
double delta_p(std::span<const double> marked_at_target,
               std::span<const double> benign_at_target);

} // namespace dovforge::stats

#endif // DOVFORGE_STATS_HPP
