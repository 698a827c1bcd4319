#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace pindic {

// All randomness in this library flows through this generator. The standard
// <random> distributions are implementation-defined, so two toolchains can
// disagree bit-for-bit on the same seed; SplitMix64 plus explicit uniform and
// Box-Muller transforms keeps every seeded artifact reproducible everywhere.

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Stateless finalizer over a single value, used to derive stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    std::uint64_t s = x;
    return splitmix64_next(s);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    // Independent stream derived from (seed, stream_id); streams never share
    // state, so e.g. reference- and deformed-image noise stay decorrelated.
    static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
        return Rng(mix64(seed + mix64(stream_id + 0x632be59bd9b4e019ull)));
    }

    std::uint64_t next_u64() { return splitmix64_next(state_); }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via Box-Muller; pairs are generated together and the
    // spare is cached. log argument is 1-u in (0,1], so it never sees zero.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace pindic
