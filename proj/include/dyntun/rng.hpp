#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (master seed, stream, rotor, kick, slot), so results do not depend on which
// worker evaluates a rotor or in what order.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace dyntun::rng {

enum class Stream : std::uint64_t {
    beta = 0x62657461,         // ensemble quasimomenta
    se_event = 0x73652d65,     // spontaneous-emission occurrence
    se_recoil = 0x73652d72,    // spontaneous-emission recoil
    area_jitter = 0x61726561,
};

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t key(std::uint64_t seed, Stream stream, std::uint64_t rotor, std::uint64_t kick,
                            std::uint64_t slot = 0) {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ static_cast<std::uint64_t>(stream));
    h = mix64(h ^ rotor);
    h = mix64(h ^ kick);
    return mix64(h ^ slot);
}

/// Uniform double in [0, 1) with 53 random bits.
constexpr double uniform(std::uint64_t seed, Stream stream, std::uint64_t rotor, std::uint64_t kick,
                         std::uint64_t slot = 0) {
    return static_cast<double>(key(seed, stream, rotor, kick, slot) >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on two keyed uniforms. Written out instead
/// of std::normal_distribution, whose output is implementation-defined.
inline double standard_normal(std::uint64_t seed, Stream stream, std::uint64_t rotor, std::uint64_t kick) {
    const double u1 = 1.0 - uniform(seed, stream, rotor, kick, 0);  // (0, 1]
    const double u2 = uniform(seed, stream, rotor, kick, 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace dyntun::rng
