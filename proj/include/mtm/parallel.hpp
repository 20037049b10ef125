#ifndef MTM_PARALLEL_HPP
#define MTM_PARALLEL_HPP

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace mtm {

/// Worker count: explicit argument wins, else the MTM_WORKERS environment
/// variable, else 1. Results must not depend on this value; work is always
/// partitioned deterministically and only the scheduling varies.
inline int resolve_workers(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("MTM_WORKERS")) {
        int w = std::atoi(env);
        if (w > 0) return w;
    }
    return 1;
}

/// Runs fn(i) for i in [0, count) on `workers` threads with dynamic
/// (atomic-counter) scheduling. fn must be safe to call concurrently for
/// distinct i. Exceptions inside fn must be handled by the caller's closure.
template <class Fn>
void parallel_for(int count, int workers, Fn&& fn) {
    workers = resolve_workers(workers);
    if (workers <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    auto run = [&] {
        for (;;) {
            int i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= count) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    int spawn = std::min(workers, count) - 1;
    pool.reserve(static_cast<size_t>(spawn));
    for (int w = 0; w < spawn; ++w) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
}

}  // namespace mtm

#endif  // MTM_PARALLEL_HPP
