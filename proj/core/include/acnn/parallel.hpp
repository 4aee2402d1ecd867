#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace acnn {

// Worker cap: min(hardware_concurrency, ACNN_THREADS env var if set).
int worker_count();

inline int chunk_count(long long n, long long chunk_size) {
    return static_cast<int>((n + chunk_size - 1) / chunk_size);
}

// Runs fn(chunk_index, begin, end) over [0, n) split into fixed-size chunks.
// The chunk grid depends only on n and chunk_size, never on the worker count,
// so callers that reduce per-chunk results in chunk order stay bit-identical
// for any ACNN_THREADS setting.
template <typename Fn>
void parallel_chunks(long long n, long long chunk_size, Fn&& fn) {
    if (n <= 0) return;
    const int chunks = chunk_count(n, chunk_size);
    const int workers = std::min(worker_count(), chunks);
    if (workers <= 1) {
        for (int c = 0; c < chunks; ++c)
            fn(c, c * chunk_size, std::min<long long>(n, (c + 1) * chunk_size));
        return;
    }

    std::atomic<int> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    auto run = [&] {
        for (;;) {
            const int c = next.fetch_add(1);
            if (c >= chunks || failed.load()) return;
            try {
                fn(c, c * chunk_size, std::min<long long>(n, (c + 1) * chunk_size));
            } catch (...) {
                if (!failed.exchange(true)) error = std::current_exception();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers) - 1);
    for (int t = 1; t < workers; ++t) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

// Independent per-item work, no ordering guarantees.
template <typename Fn>
void parallel_for(long long n, Fn&& fn) {
    parallel_chunks(n, 1, [&](int, long long b, long long) { fn(b); });
}

}  // namespace acnn
