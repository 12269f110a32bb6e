#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace strokecast {

/// Seeded, splittable random stream.
///
/// Children derived with split() depend only on the parent seed and the key,
/// never on how many draws the parent has made. This is what makes sample
/// streams nestable: sample j of a best-of-100 run is the same draw as sample
/// j of a best-of-1 run.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    Rng split(std::uint64_t key) const;

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 bits of resolution.
    double uniform();

    // Standard normal (Box-Muller, one value per call).
    double normal();

    // Index drawn proportionally to non-negative weights. Throws if all zero.
    std::size_t categorical(std::span<const double> weights);

    // Uniform integer in [0, n).
    std::size_t below(std::size_t n);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace strokecast
