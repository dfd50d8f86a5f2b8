#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace mlwb {

/// SplitMix64 (Steele, Lea, Flood 2014). Chosen because its output is fully specified
/// by integer arithmetic, so every seeded draw is bit-reproducible on any platform.
/// Distribution helpers below avoid <random> distributions, whose algorithms are
/// implementation-defined.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller; consumes two draws per call, no cached spare.
    double normal() noexcept {
        double u1 = uniform01();
        const double u2 = uniform01();
        if (u1 <= 0.0) {
            u1 = 0x1.0p-53;
        }
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Unbiased integer in [0, bound) by rejection.
    std::uint64_t below(std::uint64_t bound) noexcept {
        if (bound <= 1) {
            return 0;
        }
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t v = next();
        while (v >= limit) {
            v = next();
        }
        return v % bound;
    }

private:
    std::uint64_t state_;
};

/// Mixes independent integers into one seed (used for per-layer / per-batch streams).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) noexcept {
    SplitMix64 g(a ^ (b * 0xD1B54A32D192ED03ULL) ^ (c * 0x8CB92BA72F3D8DD7ULL));
    g.next();
    return g.next();
}

/// Fisher-Yates permutation of [0, n).
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = i;
    }
    SplitMix64 g(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(g.below(i));
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

}  // namespace mlwb
