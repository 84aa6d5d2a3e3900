#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace nlpt {

// Worker count used by the data-parallel loops. 0 means hardware concurrency.
void set_thread_count(unsigned count);
unsigned thread_count();

// Calls body(begin, end) over fixed-size chunks of [0, size). Chunk boundaries
// do not depend on the thread count, so reductions built on chunk_sum are
// bitwise reproducible.
void parallel_for(std::size_t size, const std::function<void(std::size_t, std::size_t)>& body);

// Sum of body(begin, end) over the same fixed chunks, added in chunk order.
double chunk_sum(std::size_t size, const std::function<double(std::size_t, std::size_t)>& body);

inline constexpr std::size_t kChunk = 4096;

}  // namespace nlpt
