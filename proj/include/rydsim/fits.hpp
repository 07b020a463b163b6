#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rydsim/cavity.hpp"
#include "rydsim/design.hpp"
#include "rydsim/dispersive.hpp"
#include "rydsim/least_squares.hpp"
#include "rydsim/random.hpp"

// Model fits recovering physical parameters with standard errors. Nonlinear
// fits run the bounded Levenberg-Marquardt loop; linear and quadratic fits are
// solved in closed form. Standard errors come from the inverse curvature of
// the objective scaled by the residual variance; a seeded resampling bootstrap
// is available as an alternative for the point-list fits.

namespace rydsim {

struct FitResult {
    std::map<std::string, double> params;
    std::map<std::string, double> sigmas;
    double residual_norm = 0.0; // weighted RSS
    bool converged = false;
    int n_eval = 0;
};

struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SpectrumPoint {
    double delta_p = 0.0;     // rad/s
    double amplitude_n = 0.0; // normalized amplitude
    double phase = 0.0;       // rad
};

struct WeightedPoint {
    double x = 0.0;
    double y = 0.0;
    double sigma = 0.0; // 0 = unit weight
};

namespace detail {

inline double weight_of(double sigma) { return sigma > 0.0 ? 1.0 / (sigma * sigma) : 1.0; }

/// Resampling bootstrap: refit n_resamples resampled point sets, report the
/// spread of each named parameter.
template <typename Points, typename Refit>
std::map<std::string, double> bootstrap_sigmas(const Points& points, Refit&& refit,
                                               std::size_t n_resamples, std::uint64_t seed) {
    GaussianSampler sampler(seed);
    std::map<std::string, std::vector<double>> draws;
    Points resampled = points;
    for (std::size_t k = 0; k < n_resamples; ++k) {
        for (std::size_t i = 0; i < points.size(); ++i)
            resampled[i] = points[sampler.uniform_index(points.size())];
        try {
            const FitResult r = refit(resampled);
            for (const auto& [name, value] : r.params)
                draws[name].push_back(value);
        } catch (const std::exception&) {
            // degenerate resample, skip
        }
    }
    std::map<std::string, double> sigmas;
    for (auto& [name, values] : draws) {
        if (values.size() < 2) {
            sigmas[name] = 0.0;
            continue;
        }
        double mean = 0.0;
        for (double v : values)
            mean += v;
        mean /= static_cast<double>(values.size());
        double ss = 0.0;
        for (double v : values)
            ss += (v - mean) * (v - mean);
        sigmas[name] = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return sigmas;
}

} // namespace detail

/// Joint fit of the normalized Lorentzian amplitude and phase versus probe
/// detuning for the resonance offset and linewidth. Points enter with unit
/// weights on both observables.
inline FitResult fit_lorentzian(const std::vector<SpectrumPoint>& points,
                                const LmOptions& lm = {}) {
    if (points.size() < 5)
        throw std::invalid_argument("fit_lorentzian: need at least 5 points");

    double span_lo = points.front().delta_p, span_hi = span_lo;
    double center0 = points.front().delta_p, best_amp = -1.0;
    for (const auto& p : points) {
        span_lo = std::min(span_lo, p.delta_p);
        span_hi = std::max(span_hi, p.delta_p);
        if (p.amplitude_n > best_amp) {
            best_amp = p.amplitude_n;
            center0 = p.delta_p;
        }
    }
    const double span = span_hi - span_lo;
    if (!(span > 0.0))
        throw std::invalid_argument("fit_lorentzian: points must span a detuning range");
    const double kappa0 = 0.5 * span;

    auto residuals = [&](const std::vector<double>& p) {
        CavityMode cav;
        cav.kappa = std::abs(p[1]);
        cav.kappa_out = cav.kappa;
        cav.length_l = 1.0;
        cav.center_z = 0.5;
        std::vector<double> r(2 * points.size());
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto model = complex_transmission(points[i].delta_p - p[0], cav);
            r[2 * i] = model.amplitude_n - points[i].amplitude_n;
            r[2 * i + 1] = model.phase - points[i].phase;
        }
        return r;
    };

    LmOptions opt = lm;
    if (opt.param_scales.empty())
        opt.param_scales = {std::max(kappa0, 1.0), std::max(kappa0, 1.0)};
    const auto sum = levenberg_marquardt(residuals, {center0, kappa0}, opt);

    FitResult out;
    out.params["omega_c_offset"] = sum.params[0];
    out.params["kappa"] = std::abs(sum.params[1]);
    out.sigmas["omega_c_offset"] = sum.sigmas[0];
    out.sigmas["kappa"] = sum.sigmas[1];
    out.residual_norm = sum.rss;
    out.converged = sum.converged;
    out.n_eval = sum.n_eval;
    return out;
}

/// Weighted parabola through (t, delta_a) samples, reported in vertex form
/// {curvature, t_min, delta_min}. Exact for noiseless quadratic input; three
/// samples interpolate with zero residual.
inline FitResult fit_detuning_parabola(const std::vector<WeightedPoint>& samples,
                                       std::size_t n_bootstrap = 0,
                                       std::uint64_t bootstrap_seed = 1) {
    if (samples.size() < 3)
        throw std::invalid_argument("fit_detuning_parabola: need at least 3 samples");
    std::vector<double> x, y, w;
    for (const auto& s : samples) {
        x.push_back(s.x);
        y.push_back(s.y);
        w.push_back(detail::weight_of(s.sigma));
    }
    const QuadraticFit q = weighted_quadratic_fit(x, y, w);
    if (q.a == 0.0)
        throw std::domain_error("fit_detuning_parabola: zero curvature, vertex undefined");

    FitResult out;
    const double t_min = -q.b / (2.0 * q.a);
    const double delta_min = q.c - q.b * q.b / (4.0 * q.a);
    out.params["curvature"] = q.a;
    out.params["t_min"] = t_min;
    out.params["delta_min"] = delta_min;
    // delta method through (a, b, c) -> (curvature, t_min, delta_min)
    const double da[3] = {1.0, 0.0, 0.0};
    const double dt[3] = {q.b / (2.0 * q.a * q.a), -1.0 / (2.0 * q.a), 0.0};
    const double dd[3] = {q.b * q.b / (4.0 * q.a * q.a), -q.b / (2.0 * q.a), 1.0};
    auto propagate = [&](const double* g) {
        double acc = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                acc += g[i] * q.covariance[i * 3 + j] * g[j];
        return std::sqrt(std::max(acc, 0.0));
    };
    out.sigmas["curvature"] = propagate(da);
    out.sigmas["t_min"] = propagate(dt);
    out.sigmas["delta_min"] = propagate(dd);
    out.residual_norm = q.rss;
    out.converged = true;
    out.n_eval = 1;

    if (n_bootstrap > 0)
        out.sigmas = detail::bootstrap_sigmas(
            samples,
            [](const std::vector<WeightedPoint>& pts) { return fit_detuning_parabola(pts); },
            n_bootstrap, bootstrap_seed);
    return out;
}

/// S = S* - S0: Rydberg signal with the stray-state background removed.
inline double mcp_signal(double s_star, double s0) { return s_star - s0; }

struct InverseDetuningPoint {
    double delta_a = 0.0;     // rad/s
    double delta_phase = 0.0; // rad
    double sigma = 0.0;       // rad, 0 = unit weight
};

/// Atom number from the 1/delta_a law of the on-resonance phase change,
/// delta_phi = atan(-2 g1^2 N / (delta_a kappa)). Points at or below
/// delta_a_crit are excluded before fitting.
inline FitResult fit_inverse_detuning(const std::vector<InverseDetuningPoint>& points, double g1,
                                      double kappa, double delta_a_crit = default_delta_a_crit,
                                      const LmOptions& lm = {}) {
    if (!(g1 > 0.0) || !(kappa > 0.0))
        throw std::invalid_argument("fit_inverse_detuning: g1 and kappa must be > 0");
    std::vector<InverseDetuningPoint> kept;
    for (const auto& p : points)
        if (p.delta_a > delta_a_crit)
            kept.push_back(p);
    if (kept.empty())
        throw std::invalid_argument("fit_inverse_detuning: no points above delta_a_crit");

    double n0 = 0.0;
    for (const auto& p : kept)
        n0 += std::abs(std::tan(p.delta_phase)) * p.delta_a * kappa / (2.0 * g1 * g1);
    n0 = std::max(n0 / static_cast<double>(kept.size()), 1.0);

    auto residuals = [&](const std::vector<double>& p) {
        std::vector<double> r(kept.size());
        for (std::size_t i = 0; i < kept.size(); ++i) {
            const double model = std::atan(-2.0 * g1 * g1 * p[0] / (kept[i].delta_a * kappa));
            const double w = kept[i].sigma > 0.0 ? 1.0 / kept[i].sigma : 1.0;
            r[i] = (model - kept[i].delta_phase) * w;
        }
        return r;
    };
    LmOptions opt = lm;
    if (opt.param_scales.empty())
        opt.param_scales = {n0};
    const auto sum = levenberg_marquardt(residuals, {n0}, opt);

    FitResult out;
    out.params["n_atoms"] = sum.params[0];
    out.sigmas["n_atoms"] = sum.sigmas[0];
    out.residual_norm = sum.rss;
    out.converged = sum.converged;
    out.n_eval = sum.n_eval;
    return out;
}

struct CalibrationPoint {
    double signal = 0.0;      // Rydberg signal S (V ns)
    double delta_phase = 0.0; // rad
    double sigma = 0.0;       // rad, 0 = unit weight
};

/// Linear regression of delta_phi on S through the origin; the maximal atom
/// number is read off the fitted phase at the largest S via the dispersive
/// formula, so rescaling S changes the slope but not n_max.
inline FitResult fit_atom_calibration(const std::vector<CalibrationPoint>& points, double g1,
                                      double kappa, double delta_a) {
    if (points.size() < 2)
        throw std::invalid_argument("fit_atom_calibration: need at least 2 points");
    double sxx = 0.0, sxy = 0.0, s_max = 0.0;
    for (const auto& p : points) {
        const double w = detail::weight_of(p.sigma);
        sxx += w * p.signal * p.signal;
        sxy += w * p.signal * p.delta_phase;
        s_max = std::max(s_max, std::abs(p.signal));
    }
    if (!(sxx > 0.0) || !(s_max > 0.0))
        throw std::invalid_argument("fit_atom_calibration: degenerate signal range");
    const double slope = sxy / sxx;

    double rss = 0.0;
    for (const auto& p : points) {
        const double w = detail::weight_of(p.sigma);
        const double r = p.delta_phase - slope * p.signal;
        rss += w * r * r;
    }
    const double s2 =
        (points.size() > 1) ? rss / static_cast<double>(points.size() - 1) : 0.0;
    const double slope_sigma = std::sqrt(s2 / sxx);

    const double phi_max = slope * s_max;
    if (!(std::abs(phi_max) < pi / 2.0))
        throw std::domain_error("fit_atom_calibration: extrapolated phase beyond +-pi/2");
    const double n_max = atom_number_from_phase(phi_max, delta_a, kappa, g1);
    const double n_max_sigma =
        (std::abs(slope) > 0.0) ? n_max * slope_sigma / std::abs(slope) : 0.0;

    FitResult out;
    out.params["slope"] = slope;
    out.params["n_max"] = n_max;
    out.sigmas["slope"] = slope_sigma;
    out.sigmas["n_max"] = n_max_sigma;
    out.residual_norm = rss;
    out.converged = true;
    out.n_eval = 1;
    return out;
}

// Rectangular (probe detuning) x (time) scan of the differential observables,
// stored probe-major.
struct TimeScanData {
    std::vector<double> times;            // lab-frame bin centers (s)
    std::vector<double> probe_detunings;  // rad/s
    std::vector<std::vector<double>> delta_amp;         // [probe][time]
    std::vector<std::vector<double>> delta_amp_sigma;
    std::vector<std::vector<double>> delta_phase;       // rad
    std::vector<std::vector<double>> delta_phase_sigma; // rad

    void validate() const {
        const std::size_t np = probe_detunings.size();
        const std::size_t nt = times.size();
        if (np == 0 || nt == 0)
            throw std::invalid_argument("TimeScanData: empty grid");
        auto check = [&](const std::vector<std::vector<double>>& m, const char* name) {
            if (m.size() != np)
                throw std::invalid_argument(std::string("TimeScanData: ") + name +
                                            " rows must match probes");
            for (const auto& row : m)
                if (row.size() != nt)
                    throw std::invalid_argument(std::string("TimeScanData: ") + name +
                                                " must be rectangular");
        };
        check(delta_amp, "delta_amp");
        check(delta_amp_sigma, "delta_amp_sigma");
        check(delta_phase, "delta_phase");
        check(delta_phase_sigma, "delta_phase_sigma");
    }

    /// Sigmas below 1e-12 of the data scale count as numerically zero (a
    /// noiseless synthesis leaves rounding dust in the block scatter).
    double error_floor() const {
        double scale = 0.0;
        for (const auto& row : delta_amp)
            for (double v : row)
                scale = std::max(scale, std::abs(v));
        for (const auto& row : delta_phase)
            for (double v : row)
                scale = std::max(scale, std::abs(v));
        return 1e-12 * std::max(scale, 1e-300);
    }

    bool has_errors() const {
        const double floor = error_floor();
        for (const auto& row : delta_amp_sigma)
            for (double s : row)
                if (s > floor)
                    return true;
        for (const auto& row : delta_phase_sigma)
            for (double s : row)
                if (s > floor)
                    return true;
        return false;
    }
};

// Fixed model context for the 2-D time/frequency fit: everything except the
// time origin and the atom number.
struct TimeScanModel {
    CavityMode cavity;
    AtomEnsemble ensemble;  // g1_peak and velocity are used; n_atoms only seeds the guess
    DetuningProfile profile;
    double delta_a_crit = default_delta_a_crit;

    /// Predicted (delta_amp, delta_phase) at lab time t and probe detuning dp
    /// for trial parameters (t0, N), assuming full spin-down polarization:
    /// chi = -g1(t)^2 N / delta_a(t). Written out directly so the objective
    /// stays smooth when the optimizer probes N <= 0.
    ShiftObservation predict(double t, double delta_p, double t0, double n_atoms) const {
        const double tc = t - t0;
        const double g1 = coupling_profile(tc, ensemble, cavity);
        if (g1 == 0.0)
            return {0.0, 0.0};
        const double delta_a = true_detuning(tc, profile, cavity, ensemble);
        if (delta_a == 0.0)
            throw std::domain_error("TimeScanModel: delta_a = 0 inside the fit window");
        const double chi = -g1 * g1 * n_atoms / delta_a;
        return shift_observable(delta_p, chi, cavity);
    }
};

struct TimeFitOptions {
    double t0_guess = 0.0;
    double n_guess = 0.0;    // 0 = use model.ensemble.n_atoms
    bool multi_start = true; // coarse grid of t0 starts around t0_guess
    double t0_span = 1.0e-6;
    double t0_step = 0.25e-6;
    LmOptions lm;
};

/// Fit the full (t, delta_p) grid of differential observables for the time
/// origin and the atom number. Residuals are whitened by the per-point
/// standard errors (unit weights when the scan is noiseless); points whose
/// detuning at the initial time origin falls below delta_a_crit are excluded.
inline FitResult fit_time_model(const TimeScanData& data, const TimeScanModel& model,
                                const TimeFitOptions& options = {}) {
    data.validate();
    model.cavity.validate();
    model.ensemble.validate();
    model.profile.validate();

    const std::size_t np = data.probe_detunings.size();
    const std::size_t nt = data.times.size();
    const bool weighted = data.has_errors();
    const double floor = data.error_floor();

    // dispersive-validity mask, frozen at the initial time origin
    std::vector<char> keep(nt, 0);
    std::size_t n_keep = 0;
    for (std::size_t j = 0; j < nt; ++j) {
        const double tc = data.times[j] - options.t0_guess;
        const double delta_a = true_detuning(tc, model.profile, model.cavity, model.ensemble);
        if (std::abs(delta_a) > model.delta_a_crit) {
            keep[j] = 1;
            ++n_keep;
        }
    }
    if (n_keep == 0)
        throw std::domain_error("fit_time_model: fit window entirely non-dispersive");

    auto residuals = [&](const std::vector<double>& p) {
        std::vector<double> r;
        r.reserve(2 * np * n_keep);
        for (std::size_t i = 0; i < np; ++i) {
            for (std::size_t j = 0; j < nt; ++j) {
                if (!keep[j])
                    continue;
                const auto m =
                    model.predict(data.times[j], data.probe_detunings[i], p[0], p[1]);
                const double wa =
                    weighted ? (data.delta_amp_sigma[i][j] > floor
                                    ? 1.0 / data.delta_amp_sigma[i][j]
                                    : 0.0)
                             : 1.0;
                const double wp =
                    weighted ? (data.delta_phase_sigma[i][j] > floor
                                    ? 1.0 / data.delta_phase_sigma[i][j]
                                    : 0.0)
                             : 1.0;
                r.push_back((m.delta_amp_n - data.delta_amp[i][j]) * wa);
                r.push_back((m.delta_phase - data.delta_phase[i][j]) * wp);
            }
        }
        return r;
    };

    const double n0 =
        options.n_guess > 0.0 ? options.n_guess : std::max(model.ensemble.n_atoms, 1.0);
    LmOptions lm = options.lm;
    if (lm.param_scales.empty())
        lm.param_scales = {1.0e-6, n0};

    std::vector<double> starts{options.t0_guess};
    if (options.multi_start && options.t0_step > 0.0) {
        for (double s = options.t0_step; s <= options.t0_span + 1e-15; s += options.t0_step) {
            starts.push_back(options.t0_guess + s);
            starts.push_back(options.t0_guess - s);
        }
    }

    LeastSquaresSummary best;
    bool have_best = false;
    for (double t0_start : starts) {
        const auto sum = levenberg_marquardt(residuals, {t0_start, n0}, lm);
        if (!have_best || sum.rss < best.rss) {
            best = sum;
            have_best = true;
        }
    }

    FitResult out;
    out.params["t0"] = best.params[0];
    out.params["n_atoms"] = best.params[1];
    out.sigmas["t0"] = best.sigmas[0];
    out.sigmas["n_atoms"] = best.sigmas[1];
    out.residual_norm = best.rss;
    out.converged = best.converged;
    out.n_eval = best.n_eval;
    return out;
}

/// Mean and standard error of each probe row over the time bins inside
/// [t_center - window/2, t_center + window/2] (the named "300 ns window"
/// reduction feeding the spectrum-style fits).
struct WindowReduction {
    std::vector<double> delta_amp, delta_amp_sigma;
    std::vector<double> delta_phase, delta_phase_sigma; // rad
};

inline WindowReduction reduce_time_window(const TimeScanData& data, double t_center,
                                          double window) {
    data.validate();
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < data.times.size(); ++j)
        if (std::abs(data.times[j] - t_center) <= 0.5 * window)
            idx.push_back(j);
    if (idx.empty())
        throw std::invalid_argument("reduce_time_window: no bins inside the window");

    WindowReduction out;
    const double m = static_cast<double>(idx.size());
    for (std::size_t i = 0; i < data.probe_detunings.size(); ++i) {
        double amp = 0.0, amp_var = 0.0, phase = 0.0, phase_var = 0.0;
        for (std::size_t j : idx) {
            amp += data.delta_amp[i][j];
            phase += data.delta_phase[i][j];
            amp_var += data.delta_amp_sigma[i][j] * data.delta_amp_sigma[i][j];
            phase_var += data.delta_phase_sigma[i][j] * data.delta_phase_sigma[i][j];
        }
        out.delta_amp.push_back(amp / m);
        out.delta_phase.push_back(phase / m);
        out.delta_amp_sigma.push_back(std::sqrt(amp_var) / m);
        out.delta_phase_sigma.push_back(std::sqrt(phase_var) / m);
    }
    return out;
}

} // namespace rydsim
