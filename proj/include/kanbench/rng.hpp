#pragma once

#include <cstdint>

namespace kanbench {

/// Counter-based deterministic generator (splitmix64 finalizer over a
/// seed-derived counter sequence). The same seed yields the same stream on
/// every platform; streams can be split hierarchically without correlation.
class SeededRng {
public:
    static constexpr const char* kAlgorithm = "splitmix64";

    explicit SeededRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64();

    /// Uniform double in [0, 1), 53 random bits.
    double next_uniform();

    /// Uniform double in [lo, hi).
    double next_uniform(double lo, double hi);

    /// Standard normal via Box-Muller; consumes two counter words per draw.
    double next_normal();

    /// Child stream for a sub-task (per-sample seed, per-trajectory seed, ...).
    SeededRng split(std::uint64_t index) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

/// Seed for element `index` of the stream owned by `seed` (experiment seed ->
/// per-sample seed). Equals SeededRng(seed).split(index).seed().
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

} // namespace kanbench
