#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace commit
{
// Number of workers to use for a request of `threads` (0 = all cores) over
// `count` items.
inline std::size_t worker_count(std::size_t threads, std::size_t count)
{
    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    return std::max<std::size_t>(1, std::min(threads, count));
}

/*!
 * Calls fn(worker, index) for every index in [0, count), spread over up to
 * `threads` workers. Indices are claimed dynamically, so fn must not depend
 * on which worker runs it except through per-worker scratch state.
 *
 * If any call throws, remaining work is abandoned and the exception from the
 * lowest failing index that ran is rethrown.
 */
template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn)
{
    std::size_t const workers = worker_count(threads, count);
    if (workers == 1)
    {
        for (std::size_t i = 0; i < count; ++i)
            fn(std::size_t{0}, i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::exception_ptr error;
    std::size_t error_index = count;

    auto run = [&](std::size_t worker) {
        while (!failed.load(std::memory_order_relaxed))
        {
            std::size_t const i = next.fetch_add(1);
            if (i >= count)
                return;
            try
            {
                fn(worker, i);
            }
            catch (...)
            {
                std::lock_guard lock(error_mutex);
                if (i < error_index)
                {
                    error_index = i;
                    error = std::current_exception();
                }
                failed = true;
            }
        }
    };

    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w)
        pool.emplace_back(run, w);
    run(0);
    pool.clear();
    if (error)
        std::rethrow_exception(error);
}
}  // namespace commit
