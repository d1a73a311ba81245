// rng.hpp -- seeded random streams with implementation-pinned distributions
//
// std::mt19937_64 output is specified bit-exactly by the standard, but the
// standard <random> distributions are not. Every distribution used here is
// implemented in this file so that a given seed produces the same stream of
// values on every build.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace flowcast {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed, a consumer label
/// and an optional index. Used to fan one master seed out to init / split /
/// shuffle / dropout / per-row noise streams without cross-talk.
inline std::uint64_t substream_seed(std::uint64_t master, std::string_view label,
                                    std::uint64_t index = 0) {
    std::uint64_t h = 1469598103934665603ULL; // FNV-1a
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return splitmix64(splitmix64(master ^ h) + index);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller (two uniforms per draw, no spare kept).
    double normal() {
        double u1 = 1.0 - uniform01(); // (0, 1], log-safe
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Uniform integer in [0, bound) without modulo bias.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t rem = (UINT64_MAX % bound + 1) % bound;
        std::uint64_t x = next_u64();
        if (rem != 0) {
            while (x > UINT64_MAX - rem) x = next_u64();
        }
        return x % bound;
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace flowcast
