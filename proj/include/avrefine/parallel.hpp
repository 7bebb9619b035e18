#ifndef AVREFINE_PARALLEL_HPP
#define AVREFINE_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace avrefine
{

/// Runs fn(i) for i in [0, n) on at most `jobs` threads. Work items must not
/// share mutable state; results belong in caller-owned slots indexed by i.
/// The first exception is rethrown after all workers have joined.
template <class F>
void parallel_for(std::size_t n, unsigned jobs, F&& fn)
{
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        const auto workers = static_cast<std::size_t>(std::min<std::size_t>(jobs, n));
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                    }
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

} // namespace avrefine

#endif // AVREFINE_PARALLEL_HPP
