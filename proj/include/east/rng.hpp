#pragma once

// Random number plumbing shared by every module.
//
// All randomness in the harness descends from one 64-bit master seed through
// derive_seed(), a SplitMix64-based split function:
//
//   mix(x)                   = SplitMix64 output finalizer (Steele, Lea & Flood 2014)
//   derive_seed(p, tag, idx) = mix(mix(p ^ mix(tag)) + (idx + 1) * 0x9E3779B97F4A7C15)
//
// Streams are std::mt19937_64 (fully specified by the C++ standard). The
// standard <random> distributions are implementation-defined, so uniform,
// integer and normal variates are drawn with the explicit formulas below.

#include <cstdint>
#include <random>

namespace east {

namespace stream {
inline constexpr uint64_t env        = 0x656e76;  // bandit rewards
inline constexpr uint64_t step       = 0x73746570; // per-timestep sampling
inline constexpr uint64_t completion = 0x636d706c; // one completion within a step
inline constexpr uint64_t select     = 0x73656c;  // executed-action draw
inline constexpr uint64_t run        = 0x72756e;  // one run inside a batch
inline constexpr uint64_t shuffle    = 0x73687566; // feature shuffle control
inline constexpr uint64_t bootstrap  = 0x626f6f74; // bootstrap resampling
inline constexpr uint64_t eval       = 0x6576616c; // evaluation prompts
inline constexpr uint64_t weights    = 0x77656967; // toy transformer weights
inline constexpr uint64_t prompt_set = 0x70736574; // evaluation prompt sampler
inline constexpr uint64_t trace      = 0x74726163; // action-probability trace
} // namespace stream

constexpr uint64_t mix64(uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

constexpr uint64_t derive_seed(uint64_t parent, uint64_t tag, uint64_t index = 0) noexcept {
    return mix64(mix64(parent ^ mix64(tag)) + (index + 1) * 0x9E3779B97F4A7C15ull);
}

class rng {
public:
    explicit rng(uint64_t seed) : engine_(seed) {}

    uint64_t next() { return engine_(); }

    // uniform in [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n), Lemire's multiply-shift with rejection
    uint64_t below(uint64_t n);

    // standard normal, Box-Muller cosine branch
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 engine_;
};

} // namespace east
