#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace forestgen::alloc {

// Allocation accounting for the buffers that dominate training memory.
// Containers declared with tracked_vector report their heap usage here, which
// is what the memory-discipline assertions and the benchmark CSV read out.
//
// Global counters cover every tracked allocation in the process. Per-thread
// counters measure the transient working set of one worker job: reset at job
// start, folded into worker_transient_peak() at job end.

namespace detail {

struct Counters {
    std::atomic<std::int64_t> live{0};
    std::atomic<std::int64_t> peak{0};
    std::atomic<std::int64_t> largest_block{0};
    std::atomic<std::int64_t> worker_peak{0};
};

inline Counters& counters() {
    static Counters c;
    return c;
}

inline thread_local std::int64_t tl_live = 0;
inline thread_local std::int64_t tl_peak = 0;

inline void raise_to(std::atomic<std::int64_t>& target, std::int64_t value) {
    std::int64_t cur = target.load(std::memory_order_relaxed);
    while (cur < value &&
           !target.compare_exchange_weak(cur, value, std::memory_order_relaxed)) {
    }
}

}  // namespace detail

inline void on_alloc(std::size_t bytes) {
    auto& c = detail::counters();
    const auto b = static_cast<std::int64_t>(bytes);
    const std::int64_t now = c.live.fetch_add(b, std::memory_order_relaxed) + b;
    detail::raise_to(c.peak, now);
    detail::raise_to(c.largest_block, b);
    detail::tl_live += b;
    if (detail::tl_live > detail::tl_peak) detail::tl_peak = detail::tl_live;
}

inline void on_free(std::size_t bytes) {
    const auto b = static_cast<std::int64_t>(bytes);
    detail::counters().live.fetch_sub(b, std::memory_order_relaxed);
    detail::tl_live -= b;
}

inline std::int64_t live_bytes() {
    return detail::counters().live.load(std::memory_order_relaxed);
}
inline std::int64_t peak_bytes() {
    return detail::counters().peak.load(std::memory_order_relaxed);
}
inline std::int64_t largest_block_bytes() {
    return detail::counters().largest_block.load(std::memory_order_relaxed);
}
inline std::int64_t worker_transient_peak_bytes() {
    return detail::counters().worker_peak.load(std::memory_order_relaxed);
}

// Re-arms peak/largest/worker statistics; live carries over so that long-lived
// buffers allocated earlier stay visible in the new peak.
inline void reset_peaks() {
    auto& c = detail::counters();
    c.peak.store(c.live.load(std::memory_order_relaxed), std::memory_order_relaxed);
    c.largest_block.store(0, std::memory_order_relaxed);
    c.worker_peak.store(0, std::memory_order_relaxed);
}

// Worker job scope: transient accounting between begin_job/end_job on the
// calling thread.
inline void begin_job() {
    detail::tl_live = 0;
    detail::tl_peak = 0;
}
inline void end_job() {
    detail::raise_to(detail::counters().worker_peak, detail::tl_peak);
}

template <class T>
struct TrackingAllocator {
    using value_type = T;

    TrackingAllocator() = default;
    template <class U>
    TrackingAllocator(const TrackingAllocator<U>&) {}

    T* allocate(std::size_t n) {
        on_alloc(n * sizeof(T));
        return static_cast<T*>(::operator new(n * sizeof(T)));
    }
    void deallocate(T* p, std::size_t n) {
        on_free(n * sizeof(T));
        ::operator delete(p);
    }

    template <class U>
    bool operator==(const TrackingAllocator<U>&) const { return true; }
};

template <class T>
using tracked_vector = std::vector<T, TrackingAllocator<T>>;

}  // namespace forestgen::alloc
