#pragma once

#include <cstddef>
#include <functional>

namespace topkrf {

/// 0 means "auto" (hardware concurrency, at least 1).
std::size_t resolve_threads(std::size_t requested);

/// Calls fn(i) for every i in [0, count). Work is handed out dynamically, so
/// fn must write its result to a slot owned by i; callers then reduce the
/// slots in index order, which keeps results independent of the thread count.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Like parallel_for, but also passes a worker id in [0, threads) so callers
/// can keep per-worker scratch buffers.
void parallel_for_worker(std::size_t count, std::size_t threads,
                         const std::function<void(std::size_t worker, std::size_t i)>& fn);

}  // namespace topkrf
