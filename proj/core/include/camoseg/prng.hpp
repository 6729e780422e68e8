#pragma once

#include <cstdint>

namespace camoseg {

// Platform-independent 64-bit generator (SplitMix64, Steele et al. 2014).
// A given seed produces a bit-identical stream on every platform; no
// std::random machinery is used anywhere so that artifacts stay
// byte-reproducible across standard libraries.
class Prng {
public:
    explicit Prng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution. All floating draws are made in
    // double and cast by the caller, so float and double consumers see the
    // same underlying stream.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Uniform integer in [0, n). Rejection-free modulo is fine here: n is
    // always tiny compared to 2^64 in this codebase.
    std::uint64_t next_below(std::uint64_t n) {
        return next_u64() % n;
    }

private:
    std::uint64_t state_;
};

// Deterministic sub-stream derivation: mixes a base seed with a stream id so
// consumers can hand out independent named streams without coordinating draw
// counts.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    Prng mixer(base ^ (0xA0761D6478BD642Full * (stream + 1)));
    return mixer.next_u64();
}

// FNV-1a over a byte range; used for config provenance hashes.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t len,
                             std::uint64_t h = 0xCBF29CE484222325ull) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

}  // namespace camoseg
