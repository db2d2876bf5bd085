#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dyntun {

// Runs body(i) for i in [0, count) on up to `workers` threads. Work items must
// be independent; the first exception thrown is rethrown on the caller.
template <class Body>
void parallel_for(std::size_t count, int workers, Body&& body) {
    const auto threads = static_cast<std::size_t>(std::clamp(workers, 1, 256));
    if (threads == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
        for (;;) {
            const auto i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(count);
                return;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < std::min(threads, count); ++t) pool.emplace_back(run);
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace dyntun
