#pragma once

#include <cstdint>

namespace sdesched {

/// Counter-based random streams: every variate is a pure function of
/// (seed, a, b, c), so simulation output is independent of how work is split
/// across threads. The three counters are conventionally (path, step, coordinate)
/// in the sampler and (sample, draw, 0) in Monte-Carlo estimators.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    /// Uniform in the open interval (0, 1).
    double uniform(std::uint64_t a, std::uint64_t b, std::uint64_t c) const;

    /// Standard normal via Box-Muller on two decorrelated uniforms.
    double normal(std::uint64_t a, std::uint64_t b, std::uint64_t c) const;

    /// Raw 64-bit mix of (seed, a, b, c); basis for both variates above.
    std::uint64_t bits(std::uint64_t a, std::uint64_t b, std::uint64_t c) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
};

}  // namespace sdesched
