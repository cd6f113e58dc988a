#pragma once

#include <cstddef>
#include <optional>

#include <functional>

namespace smc {

/// Worker count: explicit request, else SMC_THREADS, else hardware concurrency.
std::size_t resolve_threads(std::optional<std::size_t> requested = std::nullopt);

/// Runs body(i) for i in [0, n) on up to `threads` workers. Results must be
/// written to index-addressed slots; the first exception (lowest index) is
/// rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace smc
