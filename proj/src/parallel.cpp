#include "artgan/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace artgan {

namespace {

std::atomic<std::size_t> g_override{0};

std::size_t env_threads()
{
    static const std::size_t value = [] {
        std::size_t n = std::max(1u, std::thread::hardware_concurrency());
        if (const char* env = std::getenv("ARTGAN_THREADS")) {
            try {
                long v = std::stol(env);
                if (v > 0) {
                    n = static_cast<std::size_t>(v);
                }
            } catch (...) {
                // ignore malformed values
            }
        }
        return n;
    }();
    return value;
}

} // namespace

std::size_t worker_threads()
{
    const std::size_t o = g_override.load();
    return o > 0 ? o : env_threads();
}

void set_worker_threads(std::size_t n) { g_override.store(n); }

void parallel_for(std::size_t count, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& body)
{
    if (count == 0) {
        return;
    }
    min_chunk = std::max<std::size_t>(min_chunk, 1);
    const std::size_t chunks = std::min(worker_threads(), (count + min_chunk - 1) / min_chunk);
    if (chunks <= 1) {
        body(0, count);
        return;
    }
    const std::size_t step = (count + chunks - 1) / chunks;
    std::vector<std::jthread> pool;
    pool.reserve(chunks - 1);
    for (std::size_t c = 1; c < chunks; ++c) {
        const std::size_t b = c * step;
        const std::size_t e = std::min(count, b + step);
        if (b < e) {
            pool.emplace_back([&body, b, e] { body(b, e); });
        }
    }
    body(0, std::min(count, step));
}

} // namespace artgan
