#pragma once

// Independent random streams derived from one run seed.

#include <cstdint>
#include <random>

namespace pll {

enum class Stream : std::uint32_t { labels = 1, init = 2, shuffle = 3, dropout = 4, augment = 5, queue = 6, synth = 7 };

inline std::mt19937_64 make_rng(std::uint64_t seed, Stream stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

/// A 64-bit seed drawn from a stream, for components that take a plain seed.
inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream) { return make_rng(seed, stream)(); }

}  // namespace pll
