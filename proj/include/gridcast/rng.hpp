#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace gridcast {

/// Seeded random generator with draws that are reproducible bit-for-bit for a
/// given seed: uniform/normal/pareto are built from raw mt19937_64 words
/// instead of the implementation-defined std distributions. Sub-generators
/// derived by fixed offsets stay stable when new consumers are added.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    /// Independent sub-generator for a fixed purpose offset.
    Rng sub(std::uint64_t offset) const { return Rng(splitmix(seed_ + offset)); }

    std::uint64_t u64() { return engine_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(engine_()) * n) >> 64);
    }

    /// Standard normal via Box-Muller (one value per call, cached pair).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Pareto excess: U^{-1/shape} - 1 >= 0, heavy-tailed for small shape.
    double pareto_excess(double shape) {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return std::pow(u, -1.0 / shape) - 1.0;
    }

private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
    std::uint64_t seed_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace gridcast
