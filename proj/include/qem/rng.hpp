#pragma once

#include <cstdint>

namespace qem {

// SplitMix64 finalizer (Steele et al.); full 64-bit avalanche.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Counter-based generator: the i-th output is mix64(key + i*gamma), so the
// stream is a pure function of (seed, position).  split(stream) derives a
// decorrelated child stream by hashing the stream id into the key, which lets
// experiments hand out one generator per task from a single master seed.
//
// All sampling in the library goes through this class; std::random
// distributions are avoided so results are bit-reproducible across platforms.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : key_(mix64(seed ^ 0x6A09E667F3BCC909ull)) {}

    std::uint64_t next_u64() {
        counter_ += 0x9E3779B97F4A7C15ull;
        return mix64(key_ + counter_);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return next_double() < p; }

    // Uniform in [0, n); multiply-shift, bias ~ n/2^64.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Child generator for task `stream`; independent of this->counter_ so the
    // derivation is stable no matter how much of the parent was consumed.
    Rng split(std::uint64_t stream) const {
        Rng child(0);
        child.key_ = mix64(key_ ^ (0xD2B74407B1CE6E93ull + mix64(stream ^ 0x8CB92BA72F3D8DD7ull)));
        child.counter_ = 0;
        return child;
    }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace qem
