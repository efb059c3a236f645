#include "kanbench/rng.hpp"

#include <cmath>
#include <numbers>

namespace kanbench {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

// splitmix64 output function (Steele, Lea, Flood 2014).
std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

} // namespace

std::uint64_t SeededRng::next_u64() {
    ++counter_;
    return mix64(seed_ + counter_ * kGamma);
}

double SeededRng::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::next_uniform(double lo, double hi) {
    return lo + next_uniform() * (hi - lo);
}

double SeededRng::next_normal() {
    // u1 in (0,1] keeps the log finite.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

SeededRng SeededRng::split(std::uint64_t index) const {
    return SeededRng(mix_seed(seed_, index));
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    // Two finalizer rounds so that (seed, index) and (seed + 1, index - 1)
    // style collisions cannot line up counter streams.
    return mix64(mix64(seed ^ 0xA5A5A5A55A5A5A5Aull) + (index + 1) * kGamma);
}

} // namespace kanbench
