#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace tcbc {

/// SplitMix64 bit generator. Cheap to construct, which lets every sample draw from its
/// own stream keyed by (seed, iteration, index) so batch assembly can run in parallel
/// without changing results. Satisfies UniformRandomBitGenerator.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

/// Hashes a list of keys into a seed for an independent stream.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = 0x243F6A8885A308D3ULL;
    for (std::uint64_t k : keys) {
        SplitMix64 mix(h ^ k);
        h = mix();
    }
    return h;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(SplitMix64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

} // namespace tcbc
