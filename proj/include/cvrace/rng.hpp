#pragma once

// splitmix64-ctr v1: a counter-based generator. Draw k (k = 1, 2, ...) of a
// stream seeded with s is mix64(s + k * 0x9e3779b97f4a7c15) where mix64 is the
// SplitMix64 finalizer. Every derived quantity below (bounded integers,
// uniforms, normals, seed hashes) is defined in terms of that sequence so that
// fold plans and synthetic data can be reproduced by any implementation.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace cvrace {

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;
inline constexpr std::string_view kRngName = "splitmix64-ctr";
inline constexpr int kRngVersion = 1;

[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Order-sensitive combination of two 64-bit values.
[[nodiscard]] constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) noexcept
{
    return mix64(h ^ mix64(v + kGoldenGamma));
}

// FNV-1a over the bytes of a string, finalized with mix64.
[[nodiscard]] constexpr std::uint64_t hash_string(std::string_view s) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

class CounterRng {
public:
    explicit constexpr CounterRng(std::uint64_t seed) noexcept : seed_(seed) {}

    [[nodiscard]] constexpr std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] constexpr std::uint64_t counter() const noexcept { return counter_; }

    constexpr std::uint64_t next() noexcept
    {
        ++counter_;
        return mix64(seed_ + counter_ * kGoldenGamma);
    }

    // Uniform on [0, bound) by rejection of the biased low range.
    constexpr std::uint64_t below(std::uint64_t bound) noexcept
    {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) {
                return r % bound;
            }
        }
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    // Box-Muller, one normal per pair of uniforms (no cached second value).
    double normal() noexcept
    {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

} // namespace cvrace
