#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "rydsim/detection.hpp"
#include "rydsim/dispersive.hpp"
#include "rydsim/units.hpp"

// Uncertainty propagation for the resonant phase measurement and the optimal
// operating point for atom-number readout.

namespace rydsim {

struct ForecastScenario {
    double n_atoms = 0.0;
    double g_n = 0.0;       // collective coupling (rad/s)
    double kappa = 0.0;     // total cavity decay rate (rad/s)
    double kappa_out = 0.0; // output coupling (rad/s)
    double n_c = 0.0;       // intracavity photon number
    double tau = 0.0;       // integration time (s)
    double n_noise = 0.0;   // effective noise photons
    std::size_t k_averages = 1;

    void validate() const {
        if (!(n_atoms > 0.0) || !(g_n > 0.0) || !(kappa > 0.0))
            throw std::invalid_argument("ForecastScenario: n_atoms, g_n, kappa must be > 0");
        if (!(kappa_out > 0.0) || kappa_out > kappa)
            throw std::invalid_argument("ForecastScenario: need 0 < kappa_out <= kappa");
        if (!(n_c > 0.0) || !(tau > 0.0) || !(n_noise > 0.0))
            throw std::invalid_argument("ForecastScenario: n_c, tau, n_noise must be > 0");
        if (k_averages < 1)
            throw std::invalid_argument("ForecastScenario: k_averages must be >= 1");
    }
};

struct DesignForecast {
    double snr = 0.0;         // single-shot power SNR
    double sigma_phi = 0.0;   // single-shot phase std (rad)
    double sigma_dphi = 0.0;  // phase-change std after k averages (rad)
    double rel_sigma_n = 0.0; // sigma_N / N
    double abs_sigma_n = 0.0; // sigma_N
    double x_opt = 0.0;       // optimal 2 chi / kappa
    double delta_a_opt = 0.0; // detuning realizing x_opt (rad/s)
    std::size_t k_averages = 1;
    // regime diagnostics
    double g_n_over_delta_a = 0.0;
    double kappa_over_delta_a = 0.0;
    double n_c_over_n_crit = 0.0;
    double n_atoms_over_n_crit = 0.0;
    std::vector<std::string> warnings;
};

/// sigma_phi = 1 / sqrt(SNR), valid for SNR >> 1.
inline double phase_uncertainty(double snr_value) {
    if (!(snr_value > 0.0))
        throw std::domain_error("phase_uncertainty: snr must be > 0");
    return 1.0 / std::sqrt(snr_value);
}

/// sigma_dphi = sqrt(2 + x^2) / sqrt(SNR k); the x^2 term accounts for the
/// reduced transmission of the shifted resonance.
inline double phase_change_uncertainty(double snr_value, double x_ratio, std::size_t k) {
    if (!(snr_value > 0.0))
        throw std::domain_error("phase_change_uncertainty: snr must be > 0");
    if (k < 1)
        throw std::invalid_argument("phase_change_uncertainty: k must be >= 1");
    return std::sqrt(2.0 + x_ratio * x_ratio) /
           std::sqrt(snr_value * static_cast<double>(k));
}

/// N = delta_a kappa / (2 g1^2) * tan(delta_phi), returned as a magnitude (a
/// negative on-resonance phase change with delta_a > 0 maps to positive N).
inline double atom_number_from_phase(double delta_phi, double delta_a, double kappa, double g1) {
    if (!(std::abs(delta_phi) < pi / 2.0))
        throw std::domain_error("atom_number_from_phase: |delta_phi| must be < pi/2");
    if (!(g1 > 0.0))
        throw std::domain_error("atom_number_from_phase: g1 must be > 0");
    return std::abs(delta_a * kappa * std::tan(delta_phi)) / (2.0 * g1 * g1);
}

/// sigma_N / N = (x + 1/x) sqrt(2 + x^2) / sqrt(SNR k), x = 2 chi / kappa.
inline double relative_atom_uncertainty(double x_ratio, double snr_value, std::size_t k = 1) {
    if (x_ratio == 0.0)
        throw std::domain_error("relative_atom_uncertainty: x = 0 carries no signal");
    if (!(snr_value > 0.0))
        throw std::domain_error("relative_atom_uncertainty: snr must be > 0");
    if (k < 1)
        throw std::invalid_argument("relative_atom_uncertainty: k must be >= 1");
    const double x = std::abs(x_ratio);
    return (x + 1.0 / x) * std::sqrt(2.0 + x * x) /
           std::sqrt(snr_value * static_cast<double>(k));
}

/// (x + 1/x) sqrt(2 + x^2), the relative uncertainty in units of 1/sqrt(SNR).
inline double atom_uncertainty_objective(double x) {
    if (!(x > 0.0))
        throw std::domain_error("atom_uncertainty_objective: x must be > 0");
    return (x + 1.0 / x) * std::sqrt(2.0 + x * x);
}

/// Minimize the objective over x in [0.1, 10]: golden-section bracketing to
/// 1e-8 followed by Newton polish on the stationarity condition
/// x^2 + 1 - 1/x^2 = 0 (equivalently x^4 + x^2 - 1 = 0).
inline double optimal_ratio() {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.1, hi = 10.0;
    double x1 = hi - gr * (hi - lo);
    double x2 = lo + gr * (hi - lo);
    double f1 = atom_uncertainty_objective(x1);
    double f2 = atom_uncertainty_objective(x2);
    while (hi - lo > 1e-8) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = atom_uncertainty_objective(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = atom_uncertainty_objective(x2);
        }
    }
    double x = 0.5 * (lo + hi);
    for (int i = 0; i < 4; ++i) {
        const double g = x * x + 1.0 - 1.0 / (x * x);
        const double dg = 2.0 * x + 2.0 / (x * x * x);
        x -= g / dg;
    }
    return x;
}

/// delta_a_opt = 2 g_N^2 / (x_opt kappa).
inline double optimal_detuning(double g_n, double kappa, double x_opt) {
    if (!(kappa > 0.0) || !(x_opt > 0.0))
        throw std::invalid_argument("optimal_detuning: kappa and x_opt must be > 0");
    return 2.0 * g_n * g_n / (x_opt * kappa);
}

/// Full forecast at the optimal operating point, with validity diagnostics for
/// the dispersive and linear-response approximations behind the formulas.
inline DesignForecast forecast(const ForecastScenario& scenario) {
    scenario.validate();
    DesignForecast f;
    f.k_averages = scenario.k_averages;
    f.snr = snr(scenario.n_c, scenario.kappa_out, scenario.tau, scenario.n_noise);
    f.x_opt = optimal_ratio();
    f.delta_a_opt = optimal_detuning(scenario.g_n, scenario.kappa, f.x_opt);
    f.sigma_phi = phase_uncertainty(f.snr);
    f.sigma_dphi = phase_change_uncertainty(f.snr, f.x_opt, scenario.k_averages);
    f.rel_sigma_n = relative_atom_uncertainty(f.x_opt, f.snr, scenario.k_averages);
    f.abs_sigma_n = scenario.n_atoms * f.rel_sigma_n;

    const double g1 = scenario.g_n / std::sqrt(scenario.n_atoms);
    const double n_crit = critical_photon_number(g1, f.delta_a_opt);
    f.g_n_over_delta_a = scenario.g_n / f.delta_a_opt;
    f.kappa_over_delta_a = scenario.kappa / f.delta_a_opt;
    f.n_c_over_n_crit = scenario.n_c / n_crit;
    f.n_atoms_over_n_crit = scenario.n_atoms / n_crit;

    if (f.snr < 10.0)
        f.warnings.push_back("SNR below 10: sigma_phi = 1/sqrt(SNR) linearization unreliable");
    if (f.n_c_over_n_crit > 0.1)
        f.warnings.push_back("n_c exceeds 10% of n_crit: dispersive shift suppression not negligible");
    if (f.g_n_over_delta_a > 0.1)
        f.warnings.push_back("g_N/delta_a above 0.1: dispersive approximation marginal");
    if (f.kappa_over_delta_a > 0.1)
        f.warnings.push_back("kappa/delta_a above 0.1: dispersive approximation marginal");
    if (f.n_atoms_over_n_crit > 0.1)
        f.warnings.push_back("N above 10% of n_crit: large-excitation eigenvalue expansion marginal");
    return f;
}

} // namespace rydsim
