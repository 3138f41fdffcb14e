#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace setmap {

// std::mt19937_64 has a standardized output sequence; the distributions in
// <random> do not, so the few we need are written out here to keep fixtures
// and models byte-identical across standard libraries.
using Rng = std::mt19937_64;

// Offsets applied to the one global seed.
inline constexpr std::uint64_t kSamplingSeedOffset = 1;
inline constexpr std::uint64_t kModelSeedOffset = 100; // + position in the model list
inline constexpr std::uint64_t kSynthSeedOffset = 7;

/// Uniform integer in [0, n) by rejection; n must be > 0.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    std::uint64_t draw = rng();
    while (draw < threshold) draw = rng();
    return draw % n;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(rng);
}

/// Standard normal via Box-Muller (one draw per call, second value discarded).
inline double standard_normal(Rng& rng) {
    double u1 = uniform_unit(rng);
    while (u1 <= 0.0) u1 = uniform_unit(rng);
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// FNV-1a, used to derive per-name seeds.
inline std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    return hash;
}

} // namespace setmap
