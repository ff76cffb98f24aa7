#pragma once

#include <cstdint>
#include <random>

namespace signkit {

// std::mt19937_64's output sequence is fixed by the standard but the
// distributions are not, so sampling is done by hand to keep seeded runs
// identical across standard libraries.

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n), rejection-sampled to avoid modulo bias. n > 0.
inline std::uint64_t uniform_index(std::mt19937_64& eng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r = eng();
    while (r >= limit) {
        r = eng();
    }
    return r % n;
}

} // namespace signkit
