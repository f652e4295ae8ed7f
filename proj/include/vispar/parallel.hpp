#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace vispar {

/// Thread count: `requested` if nonzero, else $VISPAR_THREADS, else 1.
inline std::size_t resolve_threads(std::size_t requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("VISPAR_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<std::size_t>(v);
        } catch (...) {
        }
    }
    return 1;
}

/// Splits [0, n) into `threads` contiguous chunks and runs fn(begin, end,
/// chunk) on each. Small ranges run inline. The first exception thrown by any
/// chunk is rethrown after all chunks finish.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    constexpr std::size_t kMinChunk = 4096;
    threads = std::max<std::size_t>(1, std::min(threads, n / kMinChunk));
    if (threads <= 1) {
        fn(std::size_t{0}, n, std::size_t{0});
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto guarded = [&](std::size_t b, std::size_t e, std::size_t c) {
        try {
            fn(b, e, c);
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t c = 1; c < threads; ++c) {
        const std::size_t b = std::min(n, c * chunk);
        const std::size_t e = std::min(n, b + chunk);
        pool.emplace_back(guarded, b, e, c);
    }
    guarded(std::size_t{0}, std::min(n, chunk), std::size_t{0});
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace vispar
