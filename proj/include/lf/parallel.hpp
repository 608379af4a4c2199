#pragma once

#include <cstdlib>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace lf {

// Thread cap from LF_THREADS (0 or unset = auto). Results of all parallel
// loops in this library are bitwise independent of the chosen count because
// workers write disjoint output ranges and each output element is
// accumulated in a fixed order.
inline unsigned thread_count() {
    static const unsigned cached = [] {
        const char* env = std::getenv("LF_THREADS");
        long requested = 0;
        if (env != nullptr && *env != '\0') requested = std::strtol(env, nullptr, 10);
        if (requested <= 0) {
            unsigned hw = std::thread::hardware_concurrency();
            return hw == 0 ? 1u : hw;
        }
        return static_cast<unsigned>(requested);
    }();
    return cached;
}

// Splits [0, n) into contiguous chunks, one worker thread per extra chunk.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& body) {
    const unsigned threads = thread_count();
    if (threads <= 1 || n < 2) {
        if (n > 0) body(std::size_t{0}, n);
        return;
    }
    const std::size_t chunks = std::min<std::size_t>(threads, n);
    const std::size_t base = n / chunks, extra = n % chunks;
    std::vector<std::thread> pool;
    pool.reserve(chunks - 1);
    std::size_t begin = 0;
    for (std::size_t c = 0; c < chunks; ++c) {
        const std::size_t len = base + (c < extra ? 1 : 0);
        const std::size_t end = begin + len;
        if (c + 1 == chunks) {
            body(begin, end);
        } else {
            pool.emplace_back([&body, begin, end] { body(begin, end); });
        }
        begin = end;
    }
    for (auto& t : pool) t.join();
}

}  // namespace lf
