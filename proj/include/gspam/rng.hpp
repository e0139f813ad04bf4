#pragma once

#include <cstdint>
#include <random>

namespace gspam::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic child seed for stream `index` of `seed`. Children of distinct
/// (seed, index) pairs behave as independent streams, so Monte Carlo trials and
/// per-grid-point noise draws stay reproducible under any thread schedule.
inline std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline std::mt19937_64 engine(std::uint64_t seed) {
    return std::mt19937_64(splitmix64(seed));
}

}  // namespace gspam::rng
