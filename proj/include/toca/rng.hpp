#pragma once

// Deterministic random streams.
//
// Engine: std::mt19937_64, whose output sequence is fixed by the C++
// standard. Gaussian variates use the Box-Muller transform written out here
// (std::normal_distribution is implementation-defined), with uniforms built
// from the top 53 bits of each engine output. Independent streams are keyed
// by mixing (seed, stream, index) through SplitMix64.

#include <cstdint>
#include <random>

namespace toca {

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for stream `stream`, element `index`, derived from a run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform double in [0, 1).
    double uniform();
    /// Standard normal variate.
    double normal();
    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Named streams used across the project so runs stay aligned.
namespace streams {
inline constexpr std::uint64_t kInitialNoise = 1;
inline constexpr std::uint64_t kStepNoise = 2;
inline constexpr std::uint64_t kConditioning = 3;
inline constexpr std::uint64_t kPerturbation = 4;
inline constexpr std::uint64_t kWeights = 5;
}  // namespace streams

}  // namespace toca
