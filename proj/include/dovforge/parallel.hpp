// SPDX-License-Identifier: Apache-2.0
/**
 * @file   parallel.hpp
 * @brief  Fixed-partition parallel loop capped by DOVFORGE_THREADS.
 */
#ifndef DOVFORGE_PARALLEL_HPP
#define DOVFORGE_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace dovforge {

/// Worker count: DOVFORGE_THREADS if set and positive, else hardware
/// concurrency (at least 1).
int thread_count();

/// Calls fn(i) for i in [0, n). Each index is visited exactly once; callers
/// must write only to per-index slots so results do not depend on the
/// thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn);

} // namespace dovforge

#endif // DOVFORGE_PARALLEL_HPP
