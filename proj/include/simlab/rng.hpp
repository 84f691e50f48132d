#pragma once

// Counter-based random stream: draw i from seed s is mix(s, i), so identical
// (seed, position) pairs give bit-identical values on every platform. The
// algorithm id is recorded in run metadata.

#include <cmath>
#include <cstdint>

namespace simlab {

inline constexpr const char* kRngAlgorithm = "splitmix64-counter";

struct RngState {
    std::uint64_t seed = 0;
    std::uint64_t position = 0;

    explicit RngState(std::uint64_t s = 0) : seed(s) {}

    std::uint64_t next_u64() {
        std::uint64_t z = seed + (++position) * 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; always consumes exactly two draws.
    double next_normal() {
        // u1 in (0, 1] so the log is finite.
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
        double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        return next_u64() % n;
    }
};

}  // namespace simlab
