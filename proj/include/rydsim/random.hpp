#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

#include "rydsim/units.hpp"

namespace rydsim {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Per-task seed from a master seed and a stable task index. Sweep points and
/// Monte-Carlo replicas each get derive_seed(master, index) so runs are
/// reproducible regardless of execution order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t s = master ^ (0xd1342543de82ef95ULL * (index + 1));
    return splitmix64(s);
}

// Gaussian sampler on top of mt19937_64 with an explicit Box-Muller transform.
// std::normal_distribution is implementation-defined, which would break the
// bit-identical reproducibility contract across standard libraries.
class GaussianSampler {
public:
    explicit GaussianSampler(std::uint64_t seed) : engine_(seed) {}

    /// Standard normal variate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53; // (0, 1]
        const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;         // [0, 1)
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(two_pi * u2);
        has_spare_ = true;
        return r * std::cos(two_pi * u2);
    }

    /// Circular complex Gaussian with var(Re) + var(Im) = total_variance.
    std::complex<double> complex_normal(double total_variance) {
        const double sigma_q = std::sqrt(0.5 * total_variance);
        return {sigma_q * normal(), sigma_q * normal()};
    }

    /// Uniform integer in [0, n), for bootstrap resampling.
    std::uint64_t uniform_index(std::uint64_t n) { return engine_() % n; }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace rydsim
