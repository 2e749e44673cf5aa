// SPDX-License-Identifier: Apache-2.0
/**
 * @file   rng.hpp
 * @brief  Seeded random streams. Every random draw in dovforge goes through
 *         an Rng built from an RngSeed so runs are reproducible.
 */
#ifndef DOVFORGE_RNG_HPP
#define DOVFORGE_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace dovforge {

struct RngSeed {
  std::uint64_t value = 0;

  friend bool operator==(RngSeed, RngSeed) = default;
};

/// Derives an independent child seed from a parent and a stream name.
RngSeed derive_seed(RngSeed parent, std::string_view stream);

class Rng {
public:
  explicit Rng(RngSeed seed);

  /// Uniform in [0,1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);
  /// k distinct indices from 0..n-1, sorted ascending.
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k);

private:
  std::mt19937_64 engine_;
  // Box-Muller produces pairs.
  bool has_spare_ = false;
  double spare_ = 0.0;
};

} // namespace dovforge

#endif // DOVFORGE_RNG_HPP
