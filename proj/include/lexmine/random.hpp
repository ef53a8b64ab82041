#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace lexmine {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; mixes a base seed with stream tags into a child seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
    return mix_seed(mix_seed(mix_seed(base) ^ a) ^ b);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t b = 0);

// The helpers below avoid std::*_distribution so that streams are identical
// across standard library implementations.

/// Uniform in [0, n). n must be positive.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Uniform in [0, 1).
double uniform01(Rng& rng);

/// Uniform in [lo, hi).
double uniform_real(Rng& rng, double lo, double hi);

/// Index drawn with probability proportional to `weights` (all >= 0, sum > 0).
std::size_t sample_weighted(Rng& rng, const std::vector<double>& weights);

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        auto j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

/// k distinct indices from [0, n) in draw order.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

}  // namespace lexmine
