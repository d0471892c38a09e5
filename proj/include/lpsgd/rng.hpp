#pragma once

#include <cmath>
#include <cstdint>

namespace lpsgd {

// Counter-based deterministic generator. A stream is keyed by
// (seed, stream_id, counter); draws within a stream are produced by iterating
// a splitmix64 state derived from the key. Identical keys give identical
// sequences on every platform, which keeps experiment reruns byte-identical.
class StreamRng {
public:
    StreamRng(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t counter) {
        state_ = mix(seed + 0x9e3779b97f4a7c15ull);
        state_ = mix(state_ ^ mix(stream_id + 0xbf58476d1ce4e5b9ull));
        state_ = mix(state_ ^ mix(counter + 0x94d049bb133111ebull));
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    // Uniform on [0, 1), 53 random bits.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform on [-bound, bound].
    double next_symmetric(double bound) {
        return (2.0 * next_unit() - 1.0) * bound;
    }

    // Standard normal via Box-Muller (avoids std::normal_distribution, whose
    // output is implementation-defined).
    double next_gaussian() {
        double u1 = next_unit();
        while (u1 <= 0.0) u1 = next_unit();
        const double u2 = next_unit();
        const double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    std::uint64_t next_index(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

// Stream ids used by the optimizer and experiment drivers.
namespace streams {
inline constexpr std::uint64_t kGradientNoise = 1;
inline constexpr std::uint64_t kUpdateNoise = 2;
inline constexpr std::uint64_t kBatchSampling = 3;
inline constexpr std::uint64_t kStartPoint = 4;
inline constexpr std::uint64_t kProbeDirections = 5;
inline constexpr std::uint64_t kDataSynthesis = 6;
inline constexpr std::uint64_t kLemma1 = 7;
}  // namespace streams

}  // namespace lpsgd
