// SPDX-License-Identifier: Apache-2.0
#include <dovforge/error.hpp>
#include <dovforge/stats.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace dovforge::stats {

namespace {

constexpr int kMaxIter = 10000;
constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;

// Continued fraction for I_x(a,b), valid for x < (a+1)/(a+b+2).
double beta_cf(double a, double b, double x) {
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny)
    d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny)
      d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny)
      c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny)
      d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny)
      c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps)
      return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

} // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0))
    throw NumericError("incomplete beta needs a, b > 0");
  if (x <= 0.0)
    return 0.0;
  if (x >= 1.0)
    return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(log_front) * beta_cf(a, b, x) / a;
  return 1.0 - std::exp(log_front) * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_sf(double t, double df) {
  if (!(df > 0.0))
    throw NumericError("t distribution needs df > 0");
  if (std::isnan(t))
    throw NumericError("NaN t statistic");
  if (std::isinf(t))
    return t > 0 ? 0.0 : 1.0;
  // P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2). For large |t| that ratio
  // loses precision, so compute it as 1 / (1 + t^2/df).
  const double x = 1.0 / (1.0 + (t * t) / df);
  const double two_sided = incomplete_beta(df / 2.0, 0.5, x);
  return t >= 0.0 ? 0.5 * two_sided : 1.0 - 0.5 * two_sided;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

TTestResult paired_t_test(std::span<const double> benign_at_target,
                          std::span<const double> marked_at_target, double tau) {
  if (benign_at_target.size() != marked_at_target.size())
    throw ShapeError("paired_t_test: samples differ in length");
  const std::size_t n = benign_at_target.size();
  if (n < 2)
    throw SampleSizeError("paired_t_test needs n >= 2, got " + std::to_string(n));

  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i)
    d[i] = marked_at_target[i] - (benign_at_target[i] + tau);

  TTestResult r;
  r.df = static_cast<int>(n) - 1;
  r.mean_difference = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d)
    ss += (v - r.mean_difference) * (v - r.mean_difference);
  r.sd_difference = std::sqrt(ss / static_cast<double>(n - 1));

  const bool all_equal =
      std::all_of(d.begin(), d.end(), [&](double v) { return v == d.front(); });
  if (all_equal || r.sd_difference == 0.0) {
    r.degenerate = true;
    r.t_statistic = r.mean_difference > 0.0
                        ? std::numeric_limits<double>::infinity()
                        : (r.mean_difference < 0.0
                               ? -std::numeric_limits<double>::infinity()
                               : 0.0);
    r.p_value = r.mean_difference > 0.0 ? 0.0 : 1.0;
    return r;
  }
  r.t_statistic = r.mean_difference /
                  (r.sd_difference / std::sqrt(static_cast<double>(n)));
  r.p_value = student_t_sf(r.t_statistic, static_cast<double>(r.df));
  return r;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences) {
  std::vector<double> d;
  for (double v : differences)
    if (v != 0.0)
      d.push_back(v);

  WilcoxonResult r;
  const int n = static_cast<int>(d.size());
  r.n_effective = n;
  if (n == 0) {
    r.p_value = 1.0;
    return r;
  }

  // Doubled midranks are integers: a tie group covering 1-based ranks
  // i+1..j gets (i+1+j)/2, i.e. doubled (i+1+j).
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(d[a]) < std::abs(d[b]);
  });
  std::vector<int> rank2(n);
  double tie_term = 0.0;
  for (int i = 0; i < n;) {
    int j = i;
    while (j < n && std::abs(d[order[j]]) == std::abs(d[order[i]]))
      ++j;
    for (int k = i; k < j; ++k)
      rank2[order[k]] = i + 1 + j;
    const double t = j - i;
    tie_term += t * t * t - t;
    i = j;
  }

  long w2 = 0;
  for (int i = 0; i < n; ++i)
    if (d[i] > 0.0)
      w2 += rank2[i];
  r.w_plus = w2 / 2.0;

  if (n <= kWilcoxonExactLimit) {
    // Null distribution of the doubled statistic: each rank's sign is a
    // fair coin. counts[s] = number of sign patterns with doubled sum s.
    const int total = std::accumulate(rank2.begin(), rank2.end(), 0);
    std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
    counts[0] = 1.0;
    int reach = 0;
    for (int rk : rank2) {
      for (int s = reach; s >= 0; --s)
        if (counts[s] != 0.0)
          counts[s + rk] += counts[s];
      reach += rk;
    }
    double tail = 0.0;
    for (int s = static_cast<int>(w2); s <= total; ++s)
      tail += counts[s];
    r.p_value = tail / std::ldexp(1.0, n);
    r.exact = true;
    return r;
  }

  const double nn = n;
  const double mean = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  if (var <= 0.0) {
    r.p_value = r.w_plus > mean ? 0.0 : 1.0;
    return r;
  }
  const double z = (r.w_plus - mean - 0.5) / std::sqrt(var);
  r.p_value = normal_sf(z);
  return r;
}

WilcoxonResult wilcoxon_test(std::span<const int> predictions, int target_label,
                             int num_classes) {
  if (predictions.size() < 2)
    throw SampleSizeError("wilcoxon_test needs n >= 2, got " +
                          std::to_string(predictions.size()));
  if (num_classes < 2)
    throw SampleSizeError("wilcoxon_test needs K >= 2");
  const double chance = 1.0 / num_classes;
  std::vector<double> d(predictions.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    d[i] = (predictions[i] == target_label ? 1.0 : 0.0) - chance;
  return wilcoxon_signed_rank(d);
}

double delta_p(std::span<const double> marked_at_target,
               std::span<const double> benign_at_target) {
  if (marked_at_target.size() != benign_at_target.size())
    throw ShapeError("delta_p: samples differ in length");
  if (marked_at_target.empty())
    throw EmptyInputError("delta_p on empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < marked_at_target.size(); ++i)
    sum += marked_at_target[i] - benign_at_target[i];
  return sum / static_cast<double>(marked_at_target.size());
}

} // namespace dovforge::stats
