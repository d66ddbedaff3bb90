#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>

namespace argmax_bayes {

// Self-contained xoshiro256++ generator with splitmix64 seeding.
// The standard <random> distributions are implementation-defined, so every
// draw here is produced by explicit arithmetic: identical seeds give
// identical streams on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : state_) w = splitmix64(x);
    }

    // Seed for an independent stream derived from (master, stream). Streams
    // with distinct indices never share state, so work split across streams
    // is independent of how the indices are partitioned into batches.
    static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
        std::uint64_t x = master;
        std::uint64_t a = splitmix64(x);
        x ^= stream + 0x9e3779b97f4a7c15ULL;
        std::uint64_t b = splitmix64(x);
        return a ^ (b + 0x2545f4914f6cdd1dULL);
    }

    static Rng substream(std::uint64_t master, std::uint64_t stream) {
        return Rng(derive_seed(master, stream));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0,1) with 53 random mantissa bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double a, double b) {
        return a + (b - a) * uniform01();
    }

    // One Gaussian per call; consumes exactly two uniforms (Box-Muller,
    // no cached spare, which keeps stream accounting trivial).
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Marsaglia-Tsang; only the shape >= 1 regime is needed here.
    double gamma(double shape) {
        if (shape < 1.0) throw std::invalid_argument("Rng::gamma: shape < 1 unsupported");
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    // Inverse-gamma with density ~ x^{-shape-1} exp(-scale/x).
    double inverse_gamma(double shape, double scale) {
        return scale / gamma(shape);
    }

private:
    static constexpr double two_pi = 6.283185307179586476925286766559;

    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t rotl(std::uint64_t v, int k) {
        return (v << k) | (v >> (64 - k));
    }

    std::uint64_t state_[4];
};

}  // namespace argmax_bayes
