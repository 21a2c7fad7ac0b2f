#pragma once

#include <cstddef>
#include <functional>

namespace facewarp {

/// Worker count: FACEWARP_THREADS when set (>= 1), otherwise the hardware
/// concurrency. `set_thread_override` takes precedence over both (0 clears it).
int max_threads();
void set_thread_override(int threads);
int thread_override();

/// Sets the override for its lifetime and restores the previous one.
class ScopedThreadOverride {
public:
    explicit ScopedThreadOverride(int threads) : previous_(thread_override()) { set_thread_override(threads); }
    ~ScopedThreadOverride() { set_thread_override(previous_); }
    ScopedThreadOverride(const ScopedThreadOverride&) = delete;
    ScopedThreadOverride& operator=(const ScopedThreadOverride&) = delete;

private:
    int previous_;
};

/// Calls body(begin, end) over contiguous chunks of [0, n). Chunk boundaries
/// depend only on n and the thread count, never on scheduling.
void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace facewarp
