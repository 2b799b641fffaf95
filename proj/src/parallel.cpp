// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#include "cellrender/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#ifdef CELLRENDER_HAVE_OPENMP
#include <omp.h>
#endif

namespace cellrender {

namespace {

std::atomic<int> gThreads{0};

int
defaultThreads() {
    if (const char *env = std::getenv("CELLRENDER_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) {
                return n;
            }
        } catch (const std::exception &) {
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

} // namespace

void
setThreadCount(int threads) {
    gThreads.store(threads > 0 ? threads : 0);
}

int
threadCount() {
    const int n = gThreads.load();
    return n > 0 ? n : defaultThreads();
}

void
parallelFor(std::size_t count, const std::function<void(std::size_t)> &body) {
    const int threads = threadCount();
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            body(i);
        }
        return;
    }
#ifdef CELLRENDER_HAVE_OPENMP
    std::exception_ptr error;
    std::mutex         mutex;
    const auto         n = static_cast<std::int64_t>(count);
#pragma omp parallel for schedule(dynamic, 4) num_threads(threads)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard lock(mutex);
            if (!error) {
                error = std::current_exception();
            }
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
#else
    for (std::size_t i = 0; i < count; ++i) {
        body(i);
    }
#endif
}

} // namespace cellrender
