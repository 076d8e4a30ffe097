#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

namespace icafuse {

// Seeded random stream. The engine is std::mt19937_64, whose output sequence
// is fixed by the C++ standard; uniform and normal variates are derived here
// rather than through <random> distributions, whose algorithms are
// implementation-defined. Sequences are therefore reproducible across builds.
//
// Child streams are derived from (seed, label[, index]) via FNV-1a and
// splitmix64 mixing, so a child depends only on its parent's seed and label,
// never on how many draws the parent has made.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }
    // [0, 1) with 53 bits of resolution.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Standard normal, Marsaglia polar method.
    double normal();
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    RngStream split(std::string_view label) const;
    RngStream split(std::string_view label, std::uint64_t index) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::optional<double> spare_normal_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace icafuse
