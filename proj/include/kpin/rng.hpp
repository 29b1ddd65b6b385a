// Deterministic random number generation. Gaussian variates use an
// explicit Box-Muller transform on top of mt19937_64 so that sequences
// are pinned by the seed alone, independent of the standard library's
// distribution internals.

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>

#include "kpin/numerics.hpp"

namespace kpin {

// splitmix64 step; used to derive independent stream seeds from one seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Uniform on [0, 1).
    double uniform() {
        return (gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t uniform_index(std::uint64_t n) { return gen_() % n; }

    // Standard normal via Box-Muller; second variate cached.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 0.0);
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    // Circular complex Gaussian with E|z|^2 = sigma^2.
    Complex circular_gaussian(double sigma) {
        const double s = sigma / std::sqrt(2.0);
        return {s * gaussian(), s * gaussian()};
    }

    ComplexVector circular_gaussian_vector(Eigen::Index n, double sigma = 1.0) {
        ComplexVector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = circular_gaussian(sigma);
        return v;
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace kpin
