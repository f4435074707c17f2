#pragma once

#include <cstdint>
#include <random>

namespace latent_audit {

/// SplitMix64 finalizer; used only to derive well-separated substream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Seed of substream `stream` under `base`. Substreams nest:
/// substream_seed(substream_seed(seed, tag), index).
constexpr std::uint64_t substream_seed(std::uint64_t base, std::uint64_t stream) noexcept {
    return mix64(base + 0x9E3779B97F4A7C15ULL * (stream + 1));
}

/// Fixed tags for the top-level substreams of every generator in the toolkit.
namespace stream {
inline constexpr std::uint64_t kTemplates = 1;
inline constexpr std::uint64_t kSamples = 2;
inline constexpr std::uint64_t kAugment = 3;
inline constexpr std::uint64_t kInit = 4;
inline constexpr std::uint64_t kShuffle = 5;
inline constexpr std::uint64_t kRayleigh = 6;
inline constexpr std::uint64_t kPermutation = 7;
}  // namespace stream

/// Portable random source: mt19937_64 (bit-exact across standard libraries)
/// with explicit uniform/normal/Rayleigh transforms instead of the
/// implementation-defined std distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1]; safe as a log argument.
    double uniform_pos() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal by Box-Muller, one output per two uniforms (no caching).
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Rayleigh(scale) by inverse CDF: scale * sqrt(-2 ln U).
    double rayleigh(double scale);

    /// Uniform integer in [0, n) by rejection (no modulo bias).
    std::uint64_t below(std::uint64_t n);

private:
    std::mt19937_64 engine_;
};

}  // namespace latent_audit
