#pragma once

#include <cstdint>
#include <initializer_list>

namespace gridad {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives a stream seed from a root seed and a path of integer keys, e.g.
/// (seed, split, class, index) for one generated image.
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) noexcept;

/// xoshiro256** with SplitMix64 state expansion. Every draw is defined by
/// integer arithmetic plus IEEE log/sqrt/cos, so streams are reproducible
/// across platforms (unlike the std:: distributions).
class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept;

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) noexcept;
    /// Standard normal via Box-Muller (one value per call, no caching).
    double normal() noexcept;

private:
    std::uint64_t s_[4];
};

}  // namespace gridad
