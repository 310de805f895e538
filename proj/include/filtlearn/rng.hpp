#pragma once

#include <cstdint>
#include <cmath>

namespace filtlearn {

/// Deterministic counter-style generator (SplitMix64). Every stochastic
/// routine in the library takes one of these (or a seed) explicitly; nothing
/// reads global state, so identical seeds give identical runs on any platform.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    /// Derive an independent substream: same (seed, stream_id) -> same stream.
    static SplitMix64 substream(std::uint64_t seed, std::uint64_t stream_id) {
        return SplitMix64(seed + mix(0x9E3779B97F4A7C15ULL * (stream_id + 1)));
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    /// Uniform in [0, 1) with 53 random mantissa bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    /// Standard normal via Box-Muller (cosine branch); two u64 draws per call.
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Uniform integer in [0, n). Multiply-shift map; bias < n / 2^64.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

} // namespace filtlearn
