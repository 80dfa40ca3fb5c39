#ifndef LCA_PARALLEL_HPP
#define LCA_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace lca {

/// Caps the number of worker threads used by the data-parallel loops.
/// Values < 1 reset to the default (LCA_NUM_THREADS, else hardware count).
/// Results never depend on this setting: work is split into fixed-size blocks
/// whose partial results are reduced in block order.
void set_num_threads(int threads);
int num_threads();

/// Runs task(i) for i in [0, count), possibly concurrently. Each index must
/// write only to its own output slot.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& task);

}  // namespace lca

#endif  // LCA_PARALLEL_HPP
