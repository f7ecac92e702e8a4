#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mvmlp {

/// Fork-join over [0, count) in `threads` contiguous chunks; fn(begin, end) per chunk.
/// The first exception thrown by any worker is rethrown on the calling thread.
template <class Fn>
void parallel_chunks(std::size_t count, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads <= 1) {
        if (count > 0) {
            fn(std::size_t{0}, count);
        }
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::jthread> workers;
    workers.reserve(threads);
    const std::size_t base = count / threads;
    const std::size_t extra = count % threads;
    std::size_t begin = 0;
    for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t end = begin + base + (t < extra ? 1 : 0);
        workers.emplace_back([&, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
            }
        });
        begin = end;
    }
    workers.clear();
    if (error) {
        std::rethrow_exception(error);
    }
}

template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
    parallel_chunks(count, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            fn(i);
        }
    });
}

} // namespace mvmlp
