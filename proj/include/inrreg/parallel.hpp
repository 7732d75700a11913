// parallel.hpp - fixed-chunk parallel loops.
//
// Work is split into chunks whose boundaries depend only on the problem size,
// never on the thread count. Callers that reduce per-chunk partial results in
// chunk order therefore get bit-identical answers for any thread count.

#pragma once

#include <cstddef>
#include <functional>

namespace inrreg {

void set_thread_count(int n);
int thread_count();

inline constexpr std::size_t kDefaultChunk = 256;

inline std::size_t chunk_count(std::size_t n, std::size_t chunk = kDefaultChunk){
    return (n + chunk - 1) / chunk;
}

// Calls fn(chunk_index, begin, end) for every chunk, possibly concurrently.
// The first exception thrown by any chunk is rethrown after all workers join.
void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)> &fn,
                     std::size_t chunk = kDefaultChunk);

} // namespace inrreg
