#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace lidalign {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

// Deterministic random source. mt19937_64 is fully specified by the standard
// and the value mappings below avoid std::*_distribution, whose output is
// implementation-defined; streams are therefore reproducible across builds.
class Rng {
public:
    explicit Rng(std::uint64_t seed)
        : base_(detail::splitmix64(seed)), gen_(base_) {}

    // Independent substream, e.g. one per training step or per cluster.
    // Derived from the constructor seed, not from consumed stream state.
    Rng fork(std::uint64_t id) const {
        return Rng(base_ ^ detail::splitmix64(id ^ 0x51ed2701a5a5a5a5ULL));
    }
    Rng fork(std::string_view label) const { return fork(detail::fnv1a(label)); }

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi], inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        // Rejection sampling to kill modulo bias; at most a few retries.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return lo + static_cast<std::int64_t>(x % span);
    }

    // Box-Muller; consumes two uniforms per call so the stream advance is
    // independent of how results are used.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::uint64_t base_;
    std::mt19937_64 gen_;
};

} // namespace lidalign
