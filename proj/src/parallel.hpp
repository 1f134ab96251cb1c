#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace metamorph::detail {

/// Runs fn(t) for t in [0, num_tasks) on up to `threads` workers. Tasks must
/// touch disjoint state; under that contract the outcome is independent of
/// the thread count. The first exception thrown by any task is rethrown on
/// the calling thread after all workers join.
inline void run_parallel(int num_tasks, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || num_tasks <= 1) {
        for (int t = 0; t < num_tasks; ++t) {
            fn(t);
        }
        return;
    }
    const int workers = std::min(threads, num_tasks);
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (int t = next.fetch_add(1); t < num_tasks; t = next.fetch_add(1)) {
                try {
                    fn(t);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) {
                        first_error = std::current_exception();
                    }
                }
            }
        });
    }
    for (std::thread& th : pool) {
        th.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

} // namespace metamorph::detail
