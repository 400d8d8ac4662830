#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ctxmeter {

// Deterministic random source. mt19937_64 has a standard-specified sequence,
// and the distributions below are implemented by hand because the std::
// distribution algorithms are implementation-defined. Identical seeds give
// identical streams on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed), seed_mix_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    int64_t uniform_int(int64_t n) {
        const uint64_t un = static_cast<uint64_t>(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<int64_t>(x % un);
    }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(theta);
        have_cached_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Independent child stream; used to give each utterance its own RNG so
    // generation order does not matter.
    Rng fork(uint64_t stream) const {
        uint64_t z = seed_mix_ + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return Rng(z ^ (z >> 31));
    }

    static Rng forked(uint64_t seed, uint64_t stream) {
        return Rng(seed).fork(stream);
    }

private:
    std::mt19937_64 engine_;
    uint64_t seed_mix_ = 0;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace ctxmeter
