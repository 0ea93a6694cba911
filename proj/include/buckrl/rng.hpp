#pragma once

#include <cstdint>
#include <random>

namespace buckrl {

/// splitmix64 step, used to derive independent stream seeds from a run seed.
std::uint64_t splitmix64(std::uint64_t& state);

/// Deterministic random source. The engine (mt19937_64) has a
/// standard-specified output sequence; the distributions are implemented
/// here because the standard library's are implementation-defined and
/// would break byte-for-byte reproducibility across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    /// Independent substream `stream_id` of the run seed.
    static Rng stream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t bits() { return eng_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::size_t index(std::size_t n);

    /// Standard normal via Box-Muller (pair cached).
    double normal();

private:
    std::mt19937_64 eng_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace buckrl
