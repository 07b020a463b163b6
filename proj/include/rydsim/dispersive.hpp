#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "rydsim/cavity.hpp"
#include "rydsim/units.hpp"

// Dispersive Tavis-Cummings physics for a pointlike ensemble of two-level
// atoms crossing a single cavity mode: collective shift, time-dependent
// coupling and detuning profiles, Stark effects, photon-number suppression of
// the shift, and the eigenvalue expressions used as oracles for it.

namespace rydsim {

// Threshold below which the system leaves the dispersive regime; points with
// |delta_a| below it are flagged and excluded from fits.
inline constexpr double default_delta_a_crit = angular_from_hz(10.0e6);

struct AtomEnsemble {
    double n_atoms = 0.0;  // number of coupled atoms N
    double jz = 0.0;       // pseudo-spin polarization <J_z>, in [-N/2, N/2]
    double g1_peak = 0.0;  // peak single-atom coupling (rad/s)
    double omega_a0 = 0.0; // field-free transition frequency (rad/s)
    double velocity = 0.0; // beam velocity v_z (m/s)

    void validate() const {
        if (n_atoms < 0.0)
            throw std::invalid_argument("AtomEnsemble: n_atoms must be >= 0");
        if (std::abs(jz) > 0.5 * n_atoms * (1.0 + 1e-12))
            throw std::invalid_argument("AtomEnsemble: |jz| must be <= n_atoms/2");
        if (g1_peak < 0.0)
            throw std::invalid_argument("AtomEnsemble: g1_peak must be >= 0");
        if (!(velocity > 0.0))
            throw std::invalid_argument("AtomEnsemble: velocity must be > 0");
    }

    /// Time the atoms spend inside the cavity.
    double transit_time(const CavityMode& cavity) const { return cavity.length_l / velocity; }
};

// Raw atom-cavity detuning parabola plus the position-dependent ac Stark
// correction. Times are in the cavity frame (t_c = 0 at the entrance hole).
struct DetuningProfile {
    double curvature = 0.0;     // parabola coefficient (rad/s per s^2)
    double t_min = 0.0;         // time of minimal raw detuning (s)
    double delta_min = 0.0;     // minimal raw detuning (rad/s)
    double ac_stark_peak = 0.0; // ac Stark shift at the mode center (rad/s)
    int ac_sign = +1;           // +1 subtracts the ac correction, -1 adds it

    void validate() const {
        if (curvature < 0.0)
            throw std::invalid_argument("DetuningProfile: curvature must be >= 0");
        if (ac_stark_peak < 0.0)
            throw std::invalid_argument("DetuningProfile: ac_stark_peak must be >= 0");
        if (ac_sign != +1 && ac_sign != -1)
            throw std::invalid_argument("DetuningProfile: ac_sign must be +1 or -1");
    }
};

struct OperatingPoint {
    double chi = 0.0;     // dispersive shift (rad/s)
    double x_ratio = 0.0; // x = 2 chi / kappa
    double n_crit = 0.0;  // critical photon number
    double g_n = 0.0;     // collective coupling (rad/s)
};

struct EigenLevel {
    double n_excitations = 0.0;
    double j_polarization = 0.0;
    double energy = 0.0; // E / hbar (rad/s)
};

/// Collective dispersive shift chi = (g_N^2 / delta_a) * (jz / (N/2)), which
/// reduces to chi = 2 g1^2 jz / delta_a independently of N.
inline double collective_shift(double g1, double n_atoms, double jz, double delta_a) {
    if (n_atoms < 0.0 || std::abs(jz) > 0.5 * n_atoms * (1.0 + 1e-12))
        throw std::invalid_argument("collective_shift: need |jz| <= n_atoms/2");
    if (delta_a == 0.0)
        throw std::domain_error("collective_shift: delta_a = 0, dispersive limit undefined");
    return 2.0 * g1 * g1 * jz / delta_a;
}

/// g_N / |delta_a|; the dispersive approximation degrades above ~0.1.
inline double dispersive_validity(double g1, double n_atoms, double delta_a) {
    if (delta_a == 0.0)
        return std::numeric_limits<double>::infinity();
    return g1 * std::sqrt(n_atoms) / std::abs(delta_a);
}

inline double collective_coupling(double g1, double n_atoms) {
    if (n_atoms < 0.0)
        throw std::invalid_argument("collective_coupling: n_atoms must be >= 0");
    return g1 * std::sqrt(n_atoms);
}

/// Single-atom coupling seen by the moving ensemble: g1(t_c) follows the sine
/// mode profile along the beam and is exactly zero outside the cavity.
inline double coupling_profile(double t_c, const AtomEnsemble& ensemble, const CavityMode& cavity) {
    const double transit = ensemble.transit_time(cavity);
    if (t_c <= 0.0 || t_c >= transit)
        return 0.0;
    return ensemble.g1_peak * std::sin(pi * ensemble.velocity * t_c / cavity.length_l);
}

/// Raw (ac-Stark contaminated) atom-cavity detuning parabola.
inline double raw_detuning(double t_c, const DetuningProfile& profile) {
    const double dt = t_c - profile.t_min;
    return profile.curvature * dt * dt + profile.delta_min;
}

/// Position-dependent ac Stark shift, sin^2 along the mode, zero outside.
inline double ac_stark_profile(double z_c, const DetuningProfile& profile, const CavityMode& cavity) {
    if (z_c <= 0.0 || z_c >= cavity.length_l)
        return 0.0;
    const double s = std::sin(pi * z_c / cavity.length_l);
    return profile.ac_stark_peak * s * s;
}

/// Atom-cavity detuning with the ac Stark correction applied (subtracted for
/// the default ac_sign = +1). Outside the cavity the correction vanishes.
inline double true_detuning(double t_c, const DetuningProfile& profile, const CavityMode& cavity,
                            const AtomEnsemble& ensemble) {
    const double z_c = ensemble.velocity * t_c;
    return raw_detuning(t_c, profile) -
           static_cast<double>(profile.ac_sign) * ac_stark_profile(z_c, profile, cavity);
}

inline double critical_photon_number(double g1, double delta_a) {
    if (!(g1 > 0.0))
        throw std::domain_error("critical_photon_number: g1 must be > 0");
    return delta_a * delta_a / (4.0 * g1 * g1);
}

/// Instantaneous operating point while the ensemble crosses the cavity.
inline OperatingPoint time_dependent_shift(double t_c, const AtomEnsemble& ensemble,
                                           const DetuningProfile& profile, const CavityMode& cavity) {
    const double g1_t = coupling_profile(t_c, ensemble, cavity);
    const double delta_a = true_detuning(t_c, profile, cavity, ensemble);
    OperatingPoint op;
    op.g_n = collective_coupling(g1_t, ensemble.n_atoms);
    op.chi = (g1_t == 0.0) ? 0.0 : collective_shift(g1_t, ensemble.n_atoms, ensemble.jz, delta_a);
    op.x_ratio = 2.0 * op.chi / cavity.kappa;
    op.n_crit = (g1_t > 0.0) ? critical_photon_number(g1_t, delta_a)
                             : std::numeric_limits<double>::infinity();
    return op;
}

/// Photon-number suppression of the dispersive shift,
/// chi(n_c) = chi0 / sqrt(1 + n_c / n_crit).
inline double suppressed_shift(double chi0, double n_c, double n_crit) {
    if (n_c < 0.0)
        throw std::invalid_argument("suppressed_shift: n_c must be >= 0");
    if (!(n_crit > 0.0))
        throw std::invalid_argument("suppressed_shift: n_crit must be > 0");
    return chi0 / std::sqrt(1.0 + n_c / n_crit);
}

/// Jaynes-Cummings eigenvalue E(+/-, n_c)/hbar = n_c w_c +/- sqrt(delta_a^2 + 4 g1^2 n_c)/2.
inline double jc_eigenvalue(double n_c, int branch, double g1, double delta_a, double omega_c) {
    if (n_c < 0.0)
        throw std::invalid_argument("jc_eigenvalue: n_c must be >= 0");
    if (branch != +1 && branch != -1)
        throw std::invalid_argument("jc_eigenvalue: branch must be +1 or -1");
    return n_c * omega_c +
           0.5 * static_cast<double>(branch) * std::sqrt(delta_a * delta_a + 4.0 * g1 * g1 * n_c);
}

/// Tavis-Cummings eigenvalue in the n >> N regime,
/// E(j, n)/hbar = n w_c + j sqrt(delta_a^2 + 4 g1^2 n), with |j| <= N/2.
inline double tc_eigenvalue(double n, double j, double n_atoms, double g1, double delta_a,
                            double omega_c) {
    if (n < 0.0)
        throw std::invalid_argument("tc_eigenvalue: n must be >= 0");
    if (std::abs(j) > 0.5 * n_atoms * (1.0 + 1e-12))
        throw std::domain_error("tc_eigenvalue: |j| must be <= n_atoms/2");
    return n * omega_c + j * std::sqrt(delta_a * delta_a + 4.0 * g1 * g1 * n);
}

/// Quadratic dc Stark tuning of the atom-cavity detuning.
inline double stark_detuning(double u_volts, double stark_coeff, double delta_a0) {
    return delta_a0 + stark_coeff * u_volts * u_volts;
}

/// Transferred atom number over the first half Rabi cycle of the preparation
/// pulse, N(omega_ratio) = n_max sin^2(pi omega_ratio / 2).
inline double rabi_population(double omega_ratio, double n_max) {
    if (omega_ratio < 0.0)
        throw std::invalid_argument("rabi_population: omega_ratio must be >= 0");
    const double s = std::sin(0.5 * pi * omega_ratio);
    return n_max * s * s;
}

} // namespace rydsim
