#pragma once

#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace topics {

// Runs fn(chunk, begin, end) over a fixed contiguous partition of
// [0, n) into `threads` chunks.  The partition depends only on n and
// the thread count, so chunked reductions are deterministic for a
// given configuration.
inline void parallel_chunks(int n, int threads,
                            const std::function<void(int, int, int)>& fn) {
    if (threads < 1) threads = 1;
    if (threads > n) threads = n > 0 ? n : 1;
    if (threads == 1) {
        fn(0, 0, n);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(threads);
    pool.reserve(threads);
    int base = n / threads, rem = n % threads, begin = 0;
    for (int t = 0; t < threads; ++t) {
        int len = base + (t < rem ? 1 : 0);
        pool.emplace_back(
            [&fn, &errs](int chunk, int b, int e) {
                try {
                    fn(chunk, b, e);
                } catch (...) {
                    errs[chunk] = std::current_exception();
                }
            },
            t, begin, begin + len);
        begin += len;
    }
    for (auto& th : pool) th.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}

inline int env_thread_count(const char* var = "TOPICS_THREADS") {
    if (const char* s = std::getenv(var)) {
        int v = std::atoi(s);
        if (v > 0) return v;
    }
    return 1;
}

}  // namespace topics
