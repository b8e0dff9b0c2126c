#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <exception>
#include <mutex>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace hullopt {

/// Thickness value per parameter, in mm.
using Configuration = std::vector<double>;

enum class LoadKind : int { Hogging = 0, Sagging = 1 };
inline constexpr std::array<LoadKind, 2> kLoadKinds{LoadKind::Hogging, LoadKind::Sagging};
inline constexpr std::size_t kNumLoads = 2;

/// Unique entries of the Cauchy stress tensor, in storage order.
enum class StressComponent : int { Sx = 0, Sy = 1, Sz = 2, Txy = 3, Txz = 4, Tyz = 5 };
inline constexpr std::size_t kNumComponents = 6;

inline constexpr std::string_view load_name(LoadKind l)
{
    return l == LoadKind::Hogging ? "hogging" : "sagging";
}

inline constexpr std::string_view component_name(std::size_t s)
{
    constexpr std::array<std::string_view, kNumComponents> names{"sx", "sy", "sz", "txy", "txz", "tyz"};
    return names.at(s);
}

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
/// Invalid user input or configuration file content.
struct ConfigError : Error {
    using Error::Error;
};
/// A value outside the admissible domain of an operation.
struct DomainError : Error {
    using Error::Error;
};
struct SolverError : Error {
    using Error::Error;
};
/// Inconsistent data handed between stages (sizes, missing entries).
struct DataError : Error {
    using Error::Error;
};
struct LookupError : Error {
    using Error::Error;
};
struct FitError : Error {
    using Error::Error;
};

/// Diagnostic messages on stderr; silenced by HULLOPT_QUIET.
inline void warn(const std::string& msg)
{
    static const bool quiet = std::getenv("HULLOPT_QUIET") != nullptr;
    if (!quiet)
        std::cerr << "warning: " << msg << '\n';
}

/// Worker count from HULLOPT_THREADS, else the hardware concurrency.
inline unsigned thread_count()
{
    if (const char* env = std::getenv("HULLOPT_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0)
            return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n); tasks must be independent. Rethrows the first exception.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned threads = 0)
{
    if (threads == 0)
        threads = thread_count();
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error)
                        error = std::current_exception();
                }
            }
        });
    for (auto& th : pool)
        th.join();
    if (error)
        std::rethrow_exception(error);
}

/// FNV-1a over raw bytes; used for snapshot checksums and cache keys.
inline std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 1469598103934665603ULL)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

/// splitmix64 step; derives independent seeds from (base seed, counter).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t counter)
{
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (counter + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace hullopt
