#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

namespace rslq {

using Engine = std::mt19937_64;

/// Independent sub-streams of one simulated path. Each lane owns its own
/// engine so that, e.g., the chain draws do not shift when the Brownian
/// draws change.
enum class Lane : std::uint64_t {
    Chain = 1,
    Brownian = 2,
    Control = 3,
    Driver = 4,
};

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of stream(master_seed, index, lane). Pure function of its
/// arguments, so the stream a path sees never depends on scheduling.
inline std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index, Lane lane)
{
    std::uint64_t s = splitmix64(master_seed);
    s = splitmix64(s ^ static_cast<std::uint64_t>(lane) * 0xd1b54a32d192ed03ULL);
    return splitmix64(s + index);
}

inline Engine make_stream(std::uint64_t master_seed, std::uint64_t index, Lane lane)
{
    return Engine(derive_seed(master_seed, index, lane));
}

inline unsigned default_workers()
{
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(i) for i in [0, count) on up to `workers` threads using static
/// contiguous blocks. fn must write only to slot i of caller-owned storage;
/// the caller then reduces in index order, which keeps floating-point sums
/// independent of the worker count.
template <typename Fn>
void parallel_for_index(std::size_t count, unsigned workers, Fn&& fn)
{
    workers = std::max(1u, workers);
    if (workers == 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i)
            fn(i);
        return;
    }
    const std::size_t lanes = std::min<std::size_t>(workers, count);
    const std::size_t block = (count + lanes - 1) / lanes;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> threads;
    threads.reserve(lanes);
    for (std::size_t w = 0; w < lanes; ++w) {
        const std::size_t begin = w * block;
        const std::size_t end = std::min(count, begin + block);
        if (begin >= end)
            break;
        threads.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i)
                    fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
            }
        });
    }
    for (auto& t : threads)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
}

} // namespace rslq
