#pragma once

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mgnet {

// Validation failures (bad shapes, bad arguments). CLI maps these to exit 1.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : ValidationError {
    using ValidationError::ValidationError;
};

// File-level problems (unreadable, bad magic, corrupt). CLI maps these to exit 2.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : IoError {
    using IoError::IoError;
};

// Global worker count for kernel-internal parallelism. 0 means "use
// hardware_concurrency". Results never depend on this value, only latency.
inline std::atomic<int>& thread_count_ref() {
    static std::atomic<int> n{1};
    return n;
}

inline void set_num_threads(int n) { thread_count_ref().store(n <= 0 ? 0 : n); }

inline int num_threads() {
    int n = thread_count_ref().load();
    if (n <= 0) {
        unsigned hc = std::thread::hardware_concurrency();
        n = hc == 0 ? 1 : static_cast<int>(hc);
    }
    return n;
}

// Static partition of [0, count) across workers. Each index is touched by
// exactly one worker, so results match the sequential loop bit for bit.
template <typename Fn>
void parallel_for(int64_t count, Fn&& fn) {
    int workers = num_threads();
    if (workers <= 1 || count <= 1) {
        for (int64_t i = 0; i < count; ++i) fn(i);
        return;
    }
    if (workers > count) workers = static_cast<int>(count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    int64_t chunk = (count + workers - 1) / workers;
    for (int t = 0; t < workers; ++t) {
        int64_t lo = t * chunk;
        int64_t hi = lo + chunk < count ? lo + chunk : count;
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace mgnet
