#include "sdesched/rng.hpp"

#include <cmath>

namespace sdesched {
namespace {

// SplitMix64 finalizer: a bijective 64-bit mix with good avalanche.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

uint64_t CounterRng::bits(uint64_t a, uint64_t b, uint64_t c) const {
    // Chain the finalizer over (seed, a, b, c) so each counter tuple maps to an
    // independent-looking word regardless of evaluation order.
    uint64_t h = mix64(seed_);
    h = mix64(h ^ a);
    h = mix64(h ^ b);
    h = mix64(h ^ c);
    return h;
}

double CounterRng::uniform(uint64_t a, uint64_t b, uint64_t c) const {
    // Map to the open interval (0,1): 53 high bits, offset by half an ulp.
    const uint64_t h = bits(a, b, c);
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(uint64_t a, uint64_t b, uint64_t c) const {
    const double u1 = uniform(a, b, c);
    // Salt the counter for the second uniform so (a,b,c) yields one draw.
    const double u2 =
        uniform(a ^ 0x5851f42d4c957f2dULL, b ^ 0x14057b7ef767814fULL, c ^ 0x2545f4914f6cdd1dULL);
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * M_PI * u2);
}

}  // namespace sdesched
