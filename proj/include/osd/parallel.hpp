#pragma once

#include <cstddef>
#include <functional>

namespace osd {

/// Worker count used by replica loops. 0 means hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Calls body(chunk, begin, end) over a partition of [0, count) into
/// contiguous chunks. Chunk boundaries depend only on `count` and
/// `chunks`, never on the worker count, so per-chunk partial results
/// reduced in chunk order are deterministic.
void parallel_chunks(std::size_t count, std::size_t chunks,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

/// Calls body(i) for every i in [0, count).
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace osd
