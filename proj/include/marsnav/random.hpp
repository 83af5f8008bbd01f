#ifndef MARSNAV_RANDOM_HPP
#define MARSNAV_RANDOM_HPP

#include <cstdint>
#include <random>

namespace marsnav {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; used to derive independent child seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Child seed for (parent, stream, index). Streams keep e.g. process noise
/// and measurement noise of the same run statistically independent.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
    return mix64(mix64(mix64(parent) ^ (stream * 0xd1b54a32d192ed03ULL)) + index);
}

namespace stream {
inline constexpr std::uint64_t kAtmosphere = 1;
inline constexpr std::uint64_t kInitialState = 2;
inline constexpr std::uint64_t kProcessNoise = 3;
inline constexpr std::uint64_t kMeasurementNoise = 4;
inline constexpr std::uint64_t kFilterInit = 5;
inline constexpr std::uint64_t kTraining = 6;
inline constexpr std::uint64_t kNetInit = 7;
}  // namespace stream

inline double standard_normal(Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return n(rng);
}

}  // namespace marsnav

#endif  // MARSNAV_RANDOM_HPP
