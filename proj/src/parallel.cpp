#include "facewarp/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace facewarp {

namespace {

std::atomic<int> g_override{0};

int env_threads() {
    const char* value = std::getenv("FACEWARP_THREADS");
    if (value == nullptr) {
        return 0;
    }
    try {
        return std::max(1, std::stoi(value));
    } catch (const std::exception&) {
        return 0;
    }
}

}  // namespace

int max_threads() {
    if (int o = g_override.load(); o > 0) {
        return o;
    }
    if (int e = env_threads(); e > 0) {
        return e;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void set_thread_override(int threads) { g_override.store(std::max(0, threads)); }

int thread_override() { return g_override.load(); }

void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& body) {
    if (n == 0) {
        return;
    }
    min_chunk = std::max<std::size_t>(1, min_chunk);
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(max_threads()), (n + min_chunk - 1) / min_chunk);
    if (workers <= 1) {
        body(0, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> threads;
        threads.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(n, begin + chunk);
            if (begin >= end) {
                break;
            }
            threads.emplace_back([&, begin, end] {
                try {
                    body(begin, end);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            });
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

}  // namespace facewarp
