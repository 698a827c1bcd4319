#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pindic {

// Worker-thread budget. DIC_THREADS caps it from the environment;
// set_thread_budget (used by --deterministic) overrides both.
inline int& thread_budget_override() {
    static int v = 0;
    return v;
}

inline void set_thread_budget(int n) { thread_budget_override() = n; }

inline int thread_budget() {
    if (thread_budget_override() > 0) return thread_budget_override();
    if (const char* env = std::getenv("DIC_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? static_cast<int>(hc) : 1;
}

// Runs f(worker_id, chunk_index, begin, end) over ceil(n/grain) fixed-size
// chunks. The partition depends only on (n, grain), never on the thread
// count, so a caller that accumulates per chunk and reduces in chunk order
// gets the same bits from 1 thread or 64. worker_id < thread_budget() lets
// the caller keep per-thread scratch. Exceptions from workers are rethrown.
template <class F>
void for_chunks(std::size_t n, std::size_t grain, F&& f) {
    if (n == 0) return;
    const std::size_t chunks = (n + grain - 1) / grain;
    const int threads =
        static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(thread_budget()), chunks));
    if (threads <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) {
            f(std::size_t{0}, c, c * grain, std::min(n, (c + 1) * grain));
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto work = [&](std::size_t worker) {
        try {
            for (std::size_t c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) {
                f(worker, c, c * grain, std::min(n, (c + 1) * grain));
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads) - 1);
    for (int t = 1; t < threads; ++t) pool.emplace_back(work, static_cast<std::size_t>(t));
    work(0);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace pindic
