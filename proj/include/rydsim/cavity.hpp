#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>

#include "rydsim/units.hpp"

// Complex Lorentzian transmission of a single cavity mode and the amplitude
// and phase changes induced by a shift of its resonance frequency.
//
// The normalized transmission is modeled as T(dp) = 1 / (1 + 2 i dp / kappa),
// so |T| = 1/sqrt(1 + (2 dp/kappa)^2) and arg T = -atan(2 dp/kappa). Absolute
// insertion loss is out of scope; all observables are normalized or
// differential.

namespace rydsim {

struct CavityMode {
    double omega_c = 0.0;   // mode resonance frequency (rad/s)
    double kappa = 0.0;     // total decay rate (rad/s)
    double kappa_out = 0.0; // output-port coupling rate (rad/s)
    double length_l = 0.0;  // cavity length along the atomic beam (m)
    double center_z = 0.0;  // mode center z_m (m)

    void validate() const {
        if (!(kappa > 0.0))
            throw std::invalid_argument("CavityMode: kappa must be > 0");
        if (!(kappa_out > 0.0) || kappa_out > kappa)
            throw std::invalid_argument("CavityMode: need 0 < kappa_out <= kappa");
        if (!(length_l > 0.0))
            throw std::invalid_argument("CavityMode: length_l must be > 0");
        if (!(center_z > 0.0 && center_z < length_l))
            throw std::invalid_argument("CavityMode: need 0 < center_z < length_l");
    }
};

struct ProbeTone {
    double delta_p = 0.0; // probe-cavity detuning (rad/s)
    double n_c = 0.0;     // mean intracavity photon number
    double tau = 0.0;     // integration time (s)

    void validate() const {
        if (n_c < 0.0)
            throw std::invalid_argument("ProbeTone: n_c must be >= 0");
        if (!(tau > 0.0))
            throw std::invalid_argument("ProbeTone: tau must be > 0");
    }
};

struct ComplexResponse {
    double amplitude_n = 1.0;             // normalized amplitude |T|, in (0, 1]
    double phase = 0.0;                   // arg T (rad)
    std::complex<double> value{1.0, 0.0}; // complex transmission T
};

struct ShiftObservation {
    double delta_amp_n = 0.0; // change in normalized amplitude
    double delta_phase = 0.0; // change in phase (rad)
};

/// Normalized single-pole transmission at probe-cavity detuning delta_p.
inline ComplexResponse complex_transmission(double delta_p, const CavityMode& cavity) {
    const double u = 2.0 * delta_p / cavity.kappa;
    ComplexResponse r;
    r.amplitude_n = 1.0 / std::sqrt(1.0 + u * u);
    r.phase = -std::atan(u);
    r.value = 1.0 / std::complex<double>(1.0, u);
    return r;
}

/// Transmission when the cavity resonance is pulled by a dispersive shift chi.
inline ComplexResponse shifted_response(double delta_p, double chi, const CavityMode& cavity) {
    return complex_transmission(delta_p - chi, cavity);
}

/// Difference between the shifted and the unperturbed transmission; delta_amp_n
/// is already normalized because the unshifted amplitude peaks at 1.
inline ShiftObservation shift_observable(double delta_p, double chi, const CavityMode& cavity) {
    const ComplexResponse shifted = shifted_response(delta_p, chi, cavity);
    const ComplexResponse bare = complex_transmission(delta_p, cavity);
    return {shifted.amplitude_n - bare.amplitude_n, shifted.phase - bare.phase};
}

/// Invert an on-resonance phase change into the dispersive shift,
/// chi = (kappa/2) * tan(delta_phase). Only valid for |delta_phase| < pi/2 and
/// for delta_phase measured at delta_p = 0.
inline double chi_from_phase(double delta_phase, const CavityMode& cavity) {
    if (!(std::abs(delta_phase) < pi / 2.0))
        throw std::domain_error("chi_from_phase: |delta_phase| must be < pi/2");
    return 0.5 * cavity.kappa * std::tan(delta_phase);
}

} // namespace rydsim
