#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace setmap {

/// Worker count: hardware concurrency, capped by SETMAP_THREADS (or TOOL_THREADS).
inline std::size_t worker_count() {
    std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    for (const char* name : {"SETMAP_THREADS", "TOOL_THREADS"}) {
        if (const char* env = std::getenv(name); env && *env) {
            char* end = nullptr;
            long cap = std::strtol(env, &end, 10);
            if (end != env && cap >= 1) return std::min<std::size_t>(hw, static_cast<std::size_t>(cap));
        }
    }
    return hw;
}

/// Runs body(i) for i in [0, n) across contiguous blocks. Each index must write
/// only its own output slot; results are then identical to a serial loop.
/// The exception from the lowest failing block is rethrown.
template <class Body>
void parallel_for(std::size_t n, Body&& body, std::size_t max_workers = 0) {
    std::size_t workers = max_workers ? std::min(max_workers, worker_count()) : worker_count();
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t begin = w * chunk;
        std::size_t end = std::min(n, begin + chunk);
        threads.emplace_back([&, w, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace setmap
