#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace rffi {

// Mixes a base seed with a list of keys (device index, packet index, stage tag)
// into an independent stream seed. Used so parallel and serial generation draw
// identical numbers.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys);

// Seeded generator whose derived distributions are computed here rather than by
// <random>'s implementation-defined distribution classes, so streams are
// reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer on [0, n).
    std::uint64_t below(std::uint64_t n);
    // Standard normal (Marsaglia polar, cached pair).
    double normal();

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace rffi
