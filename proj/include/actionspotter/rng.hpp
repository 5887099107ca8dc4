// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace actionspotter {

// The standard distributions are implementation-defined, so draws are done by hand on top of
// the engine's raw output. That keeps every seeded run reproducible across toolchains.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Mixes a base seed with stream coordinates (epoch, batch, episode...) into an independent seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> coords) {
    std::uint64_t s = splitmix64(base);
    for (auto c : coords)
        s = splitmix64(s ^ splitmix64(c + 0x632be59bd9b4e019ull));
    return s;
}

/// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Rng &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [lo, hi], unbiased.
inline int uniform_int(Rng &rng, int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = Rng::max() - Rng::max() % span;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return lo + static_cast<int>(x % span);
}

/// Standard normal draw (Box-Muller, one value per call).
inline double gaussian(Rng &rng) {
    double u1;
    do {
        u1 = uniform01(rng);
    } while (u1 <= 0.0);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <class It> void shuffle(It first, It last, Rng &rng) {
    const auto n = static_cast<int>(last - first);
    for (int i = n - 1; i > 0; --i) {
        const int j = uniform_int(rng, 0, i);
        std::swap(first[i], first[j]);
    }
}

} // namespace actionspotter
