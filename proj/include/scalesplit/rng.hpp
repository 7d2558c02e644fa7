#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace scalesplit {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derive a child seed from a parent seed and a list of integer keys.
template <typename... Keys>
constexpr std::uint64_t derive_seed(std::uint64_t seed, Keys... keys) noexcept {
    std::uint64_t s = mix64(seed);
    ((s = mix64(s ^ (static_cast<std::uint64_t>(keys) * 0xd1b54a32d192ed03ULL))), ...);
    return s;
}

/// Counter-based random stream: draw i is a pure function of (key, i), so
/// any sub-range of a stream can be regenerated independently.
class CounterRng {
public:
    explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(mix64(key)) {}

    std::uint64_t bits(std::uint64_t counter) const noexcept { return mix64(key_ ^ mix64(counter)); }

    /// Uniform in the open interval (0, 1).
    double uniform(std::uint64_t counter) const noexcept {
        return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; draw i consumes counters 2i and 2i+1.
    double normal(std::uint64_t i) const noexcept {
        const double u1 = uniform(2 * i);
        const double u2 = uniform(2 * i + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t key_;
};

/// Sequential convenience wrapper over CounterRng.
class RngStream {
public:
    explicit RngStream(std::uint64_t key) noexcept : rng_(key) {}
    double uniform() noexcept { return rng_.uniform(next_++); }
    double normal() noexcept { return rng_.normal(next_++); }
    std::uint64_t bits() noexcept { return rng_.bits(next_++); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept { return n == 0 ? 0 : bits() % n; }

private:
    CounterRng rng_;
    std::uint64_t next_ = 0;
};

}  // namespace scalesplit
