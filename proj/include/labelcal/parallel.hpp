#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace labelcal {

namespace detail {
inline std::atomic<unsigned>& thread_cap() {
    static std::atomic<unsigned> cap{0};
    return cap;
}
}  // namespace detail

/// Caps internal parallelism; 0 restores the default (hardware concurrency).
/// Results never depend on this value.
inline void set_max_threads(unsigned n) { detail::thread_cap().store(n); }

inline unsigned max_threads() {
    const unsigned cap = detail::thread_cap().load();
    if (cap != 0) return cap;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(chunk, begin, end) over `chunks` contiguous, equally sized index
/// ranges of [0, n). Chunk boundaries depend only on n and chunks, so a
/// caller that reduces per-chunk results in chunk order is deterministic.
template <class Fn>
void parallel_chunks(std::size_t n, std::size_t chunks, Fn&& fn) {
    if (n == 0) return;
    chunks = std::clamp<std::size_t>(chunks, 1, n);
    auto bounds = [&](std::size_t c) { return n * c / chunks; };
    const std::size_t workers = std::min<std::size_t>(chunks, max_threads());
    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) fn(c, bounds(c), bounds(c + 1));
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= chunks) return;
            try {
                fn(c, bounds(c), bounds(c + 1));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// fn(i) for every i in [0, n); fn must only write to slot i of its outputs.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    parallel_chunks(n, std::min<std::size_t>(n, 4 * std::size_t{max_threads()}),
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                        for (std::size_t i = begin; i < end; ++i) fn(i);
                    });
}

}  // namespace labelcal
