#include "stadm/threading.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace stadm {

namespace {
std::atomic<int> g_thread_cap{0};
thread_local bool tl_inside_parallel = false;

int env_threads() {
    const char* s = std::getenv("STADM_THREADS");
    if (s != nullptr) {
        const int v = std::atoi(s);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}
}  // namespace

int max_threads() {
    const int cap = g_thread_cap.load(std::memory_order_relaxed);
    return cap > 0 ? cap : env_threads();
}

void set_thread_cap(int n) { g_thread_cap.store(n < 0 ? 0 : n, std::memory_order_relaxed); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t grain) {
    if (n == 0) return;
    const int workers = tl_inside_parallel ? 1 : std::min<std::size_t>(max_threads(), std::max<std::size_t>(n / std::max<std::size_t>(grain, 1), 1));
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        const std::size_t begin = static_cast<std::size_t>(w) * chunk;
        if (begin >= n) break;
        const std::size_t end = std::min(n, begin + chunk);
        pool.emplace_back([&fn, begin, end] {
            tl_inside_parallel = true;
            fn(begin, end);
            tl_inside_parallel = false;
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace stadm
