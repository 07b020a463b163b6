#pragma once

#include <chrono>
#include <cmath>
#include <complex>
#include <ctime>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "rydsim/config.hpp"
#include "rydsim/design.hpp"
#include "rydsim/detection.hpp"
#include "rydsim/dispersive.hpp"
#include "rydsim/fits.hpp"
#include "rydsim/io.hpp"

// Config-driven scenario runners: forward-simulate, add calibrated noise, run
// the estimators and fits, and emit plot-ready CSV plus JSON reports. Every
// emitted CSV column name carries its unit (Hz for frequencies, degrees for
// phases); all synthesis draws derive from the master seed and a stable point
// index, so identical configs produce byte-identical CSV files.

namespace rydsim {

struct ScenarioResult {
    std::vector<std::string> artifacts; // file names inside the output directory
    nlohmann::json reports;
    std::map<std::string, double> summary;
    bool fit_converged = true;
};

namespace detail {

// fixed stream indices for draws that are not per-sweep-point
inline constexpr std::uint64_t seed_index_calibration = 1000003;
inline constexpr std::uint64_t seed_index_norm = 1000005;
inline constexpr std::uint64_t seed_index_pointwise = 1000007;

inline std::string iso_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Dispersive shift at lab time t for the configured truth.
inline double true_chi(const ExperimentConfig& c, double lab_time) {
    const double tc = lab_time - c.time_scan.time_origin;
    const double g1 = coupling_profile(tc, c.ensemble, c.cavity);
    if (g1 == 0.0)
        return 0.0;
    const double delta_a = true_detuning(tc, c.profile, c.cavity, c.ensemble);
    return collective_shift(g1, c.ensemble.n_atoms, c.ensemble.jz, delta_a);
}

/// Single-atom coupling at the t_min measurement window (cavity frame).
inline double window_coupling(const ExperimentConfig& c) {
    return coupling_profile(c.profile.t_min, c.ensemble, c.cavity);
}

inline double output_flux_amplitude(const ExperimentConfig& c) {
    return std::sqrt(c.probe.n_c * c.cavity.kappa_out);
}

/// Noise power at the block-bin level from a probe-off calibration record.
inline double calibrated_noise_power(const ExperimentConfig& c) {
    if (!(c.noise.n_noise > 0.0))
        return 0.0;
    NoiseModel noise = c.noise;
    GaussianSampler sampler(derive_seed(c.master_seed, seed_index_calibration));
    const auto record = synthesize_block_record(
        [](double) { return std::complex<double>(0.0, 0.0); }, noise, c.plan,
        c.probe.cycle_period, c.plan.boxcar_len, 64, 0.0, sampler);
    return calibrate_noise_power(record, block_estimator_plan(c.plan));
}

/// On-resonance reference amplitude used to normalize amplitude changes,
/// measured from its own dedicated record.
inline double normalization_amplitude(const ExperimentConfig& c, double noise_power) {
    const double flux = output_flux_amplitude(c);
    if (!(c.noise.n_noise > 0.0))
        return flux;
    GaussianSampler sampler(derive_seed(c.master_seed, seed_index_norm));
    const auto record = synthesize_block_record(
        [&](double) { return std::complex<double>(flux, 0.0); }, c.noise, c.plan,
        c.probe.cycle_period, c.plan.boxcar_len, 64, 0.0, sampler);
    return estimate_mean_amplitude(record, block_estimator_plan(c.plan), noise_power);
}

struct WindowEstimate {
    double delta_amp = 0.0, delta_amp_sigma = 0.0;
    double delta_phase = 0.0, delta_phase_sigma = 0.0; // rad
};

/// One averaged measurement of (delta_amp, delta_phase) at fixed chi and probe
/// detuning: the full record/estimator pipeline restricted to the averaging
/// window. flux_amp overrides the configured photon number (power scan).
inline WindowEstimate measure_window(const ExperimentConfig& c, double delta_p, double chi,
                                     GaussianSampler& sampler, double noise_power,
                                     double norm_amp, double flux_amp) {
    const double bin_dt = c.plan.boxcar_len;
    const auto window_bins =
        std::max<std::size_t>(1, static_cast<std::size_t>(c.time_scan.window / bin_dt + 0.5));
    const auto ref_bins =
        std::max<std::size_t>(1, detail::samples_in(c.probe.reference_window, bin_dt));
    const AveragingPlan est_plan = block_estimator_plan(c.plan);

    const auto shifted = shifted_response(delta_p, chi, c.cavity);
    const auto bare = complex_transmission(delta_p, c.cavity);
    const std::complex<double> offset = std::polar(1.0, c.noise.phase_offset);

    const auto sig = synthesize_block_record(
        [&](double) { return flux_amp * shifted.value * offset; }, c.noise, c.plan,
        c.probe.cycle_period, bin_dt, window_bins, 0.0, sampler);
    const auto ref = synthesize_block_record(
        [&](double) { return flux_amp * bare.value; }, c.noise, c.plan, c.probe.cycle_period,
        bin_dt, ref_bins, 0.0, sampler);

    const auto phase = phase_change_estimator(sig, ref, est_plan, c.noise.phase_offset);
    // amplitude reduced in the power domain across the whole window
    const auto amp = windowed_amplitude_change(sig, ref, est_plan, noise_power, norm_amp);

    WindowEstimate out;
    const double m = static_cast<double>(window_bins);
    double pvar = 0.0;
    for (std::size_t t = 0; t < window_bins; ++t) {
        out.delta_phase += phase.value[t];
        pvar += phase.std_error[t] * phase.std_error[t];
    }
    out.delta_phase /= m;
    out.delta_phase_sigma = std::sqrt(pvar) / m;
    out.delta_amp = amp.value;
    out.delta_amp_sigma = amp.std_error;
    return out;
}

struct TimeScanComputation {
    TimeScanData data;
    double noise_power = 0.0;
    double norm_amplitude = 0.0;
};

/// Full (t, delta_p) forward simulation: per probe point, synthesize the
/// multi-cycle record (block path), estimate the differential observables per
/// 100 ns bin, and assemble the rectangular grid.
inline TimeScanComputation simulate_time_scan(const ExperimentConfig& c) {
    const double bin_dt = c.plan.boxcar_len;
    const auto total_bins =
        static_cast<std::size_t>(c.probe.record_duration / bin_dt + 0.5);
    const auto ref_bins =
        static_cast<std::size_t>(c.probe.reference_window / bin_dt + 0.5);
    if (total_bins <= ref_bins)
        throw ConfigError("time_scan: record shorter than the reference window");
    const std::size_t sig_bins = total_bins - ref_bins;
    const double t_ref = static_cast<double>(sig_bins) * bin_dt;
    const AveragingPlan est_plan = block_estimator_plan(c.plan);
    const double flux = output_flux_amplitude(c);
    const std::complex<double> offset = std::polar(1.0, c.noise.phase_offset);

    TimeScanComputation out;
    out.noise_power = calibrated_noise_power(c);
    out.norm_amplitude = normalization_amplitude(c, out.noise_power);

    out.data.probe_detunings = c.probe_grid();
    for (std::size_t j = 0; j < sig_bins; ++j)
        out.data.times.push_back((static_cast<double>(j) + 0.5) * bin_dt);

    const std::size_t np = out.data.probe_detunings.size();
    out.data.delta_amp.assign(np, {});
    out.data.delta_amp_sigma.assign(np, {});
    out.data.delta_phase.assign(np, {});
    out.data.delta_phase_sigma.assign(np, {});

    for (std::size_t i = 0; i < np; ++i) {
        const double dp = out.data.probe_detunings[i];
        GaussianSampler sampler(derive_seed(c.master_seed, i));
        const auto sig = synthesize_block_record(
            [&](double t) {
                return flux * shifted_response(dp, true_chi(c, t), c.cavity).value * offset;
            },
            c.noise, c.plan, c.probe.cycle_period, bin_dt, sig_bins, 0.0, sampler);
        // the reference window sits at the record tail; chi(t) is zero there
        // once the atoms have left, and honestly contaminates it otherwise
        const auto ref = synthesize_block_record(
            [&](double t) {
                return flux * shifted_response(dp, true_chi(c, t), c.cavity).value;
            },
            c.noise, c.plan, c.probe.cycle_period, bin_dt, ref_bins, t_ref, sampler);

        const auto phase = phase_change_estimator(sig, ref, est_plan, c.noise.phase_offset);
        const auto amp =
            amplitude_change_estimator(sig, ref, est_plan, out.noise_power, out.norm_amplitude);
        out.data.delta_phase[i] = phase.value;
        out.data.delta_phase_sigma[i] = phase.std_error;
        out.data.delta_amp[i] = amp.value;
        out.data.delta_amp_sigma[i] = amp.std_error;
    }
    return out;
}

inline TimeScanModel model_from_config(const ExperimentConfig& c) {
    TimeScanModel model;
    model.cavity = c.cavity;
    model.ensemble = c.ensemble;
    model.profile = c.profile;
    model.delta_a_crit = c.time_scan.delta_a_crit;
    return model;
}

inline std::size_t resonance_index(const std::vector<double>& detunings) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < detunings.size(); ++i)
        if (std::abs(detunings[i]) < std::abs(detunings[best]))
            best = i;
    return best;
}

} // namespace detail

/// Transmission spectrum sweep (normalized amplitude and phase vs probe
/// detuning) with the Lorentzian joint fit; optional shifted-spectrum overlay.
inline ScenarioResult run_spectrum(const ExperimentConfig& c,
                                   const std::filesystem::path& out_dir) {
    GaussianSampler sampler(derive_seed(c.master_seed, detail::seed_index_pointwise));
    const bool overlay = c.spectrum.overlay_chi != 0.0;

    Table table;
    table.columns = {"delta_p_hz", "amplitude_n", "phase_deg", "model_amplitude_n",
                     "model_phase_deg"};
    if (overlay) {
        table.columns.push_back("overlay_amplitude_n");
        table.columns.push_back("overlay_phase_deg");
    }

    std::vector<SpectrumPoint> points;
    const auto n = c.spectrum.points;
    for (std::size_t i = 0; i < n; ++i) {
        const double frac = (n == 1) ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
        const double dp = -c.spectrum.span + 2.0 * c.spectrum.span * frac;
        const auto model = complex_transmission(dp, c.cavity);
        SpectrumPoint p;
        p.delta_p = dp;
        p.amplitude_n = model.amplitude_n +
                        (c.spectrum.amplitude_sigma > 0.0
                             ? c.spectrum.amplitude_sigma * sampler.normal()
                             : 0.0);
        p.phase = model.phase + (c.spectrum.phase_sigma > 0.0
                                     ? c.spectrum.phase_sigma * sampler.normal()
                                     : 0.0);
        points.push_back(p);

        std::vector<double> row{hz_from_angular(dp), p.amplitude_n, deg_from_rad(p.phase),
                                model.amplitude_n, deg_from_rad(model.phase)};
        if (overlay) {
            const auto sh = shifted_response(dp, c.spectrum.overlay_chi, c.cavity);
            row.push_back(sh.amplitude_n);
            row.push_back(deg_from_rad(sh.phase));
        }
        table.rows.push_back(std::move(row));
    }
    write_table(out_dir / "spectrum.csv", table);

    const FitResult fit = fit_lorentzian(points);
    nlohmann::json report;
    report["kappa_hz"] = hz_from_angular(fit.params.at("kappa"));
    report["kappa_sigma_hz"] = hz_from_angular(fit.sigmas.at("kappa"));
    report["omega_c_offset_hz"] = hz_from_angular(fit.params.at("omega_c_offset"));
    report["omega_c_offset_sigma_hz"] = hz_from_angular(fit.sigmas.at("omega_c_offset"));
    report["residual_norm"] = fit.residual_norm;
    report["converged"] = fit.converged;
    write_json(report, out_dir / "fit_report.json");

    ScenarioResult result;
    result.artifacts = {"spectrum.csv", "fit_report.json"};
    result.reports["lorentzian"] = report;
    result.summary["kappa_hz"] = hz_from_angular(fit.params.at("kappa"));
    result.fit_converged = fit.converged;
    return result;
}

/// 2-D time/frequency scan with the two-parameter (t0, N) model fit; emits the
/// full grid plus the on-resonance and t_min cuts.
inline ScenarioResult run_time_scan(const ExperimentConfig& c,
                                    const std::filesystem::path& out_dir) {
    const auto computation = detail::simulate_time_scan(c);
    const TimeScanData& data = computation.data;

    Table grid;
    grid.columns = {"t_s",          "delta_p_hz",      "delta_amp_n", "delta_amp_sigma",
                    "delta_phase_deg", "delta_phase_sigma_deg"};
    for (std::size_t i = 0; i < data.probe_detunings.size(); ++i)
        for (std::size_t j = 0; j < data.times.size(); ++j)
            grid.rows.push_back({data.times[j], hz_from_angular(data.probe_detunings[i]),
                                 data.delta_amp[i][j], data.delta_amp_sigma[i][j],
                                 deg_from_rad(data.delta_phase[i][j]),
                                 deg_from_rad(data.delta_phase_sigma[i][j])});
    write_table(out_dir / "time_scan.csv", grid);

    const std::size_t res = detail::resonance_index(data.probe_detunings);
    Table cut;
    cut.columns = {"t_s", "delta_amp_n", "delta_amp_sigma", "delta_phase_deg",
                   "delta_phase_sigma_deg"};
    for (std::size_t j = 0; j < data.times.size(); ++j)
        cut.rows.push_back({data.times[j], data.delta_amp[res][j], data.delta_amp_sigma[res][j],
                            deg_from_rad(data.delta_phase[res][j]),
                            deg_from_rad(data.delta_phase_sigma[res][j])});
    write_table(out_dir / "cut_resonance.csv", cut);

    const double t_min_lab = c.profile.t_min + c.time_scan.time_origin;
    const auto window = reduce_time_window(data, t_min_lab, c.time_scan.window);
    Table tmin;
    tmin.columns = {"delta_p_hz", "delta_amp_n", "delta_amp_sigma", "delta_phase_deg",
                    "delta_phase_sigma_deg"};
    for (std::size_t i = 0; i < data.probe_detunings.size(); ++i)
        tmin.rows.push_back({hz_from_angular(data.probe_detunings[i]), window.delta_amp[i],
                             window.delta_amp_sigma[i], deg_from_rad(window.delta_phase[i]),
                             deg_from_rad(window.delta_phase_sigma[i])});
    write_table(out_dir / "cut_tmin.csv", tmin);

    TimeFitOptions options;
    options.t0_guess = c.time_scan.fit_t0_guess;
    const FitResult fit = fit_time_model(data, detail::model_from_config(c), options);

    nlohmann::json report;
    report["n_atoms"] = fit.params.at("n_atoms");
    report["n_atoms_sigma"] = fit.sigmas.at("n_atoms");
    report["t0_s"] = fit.params.at("t0");
    report["t0_sigma_s"] = fit.sigmas.at("t0");
    report["residual_norm"] = fit.residual_norm;
    report["converged"] = fit.converged;
    report["injected_n_atoms"] = c.ensemble.n_atoms;
    report["injected_t0_s"] = c.time_scan.time_origin;
    write_json(report, out_dir / "fit_report.json");

    ScenarioResult result;
    result.artifacts = {"time_scan.csv", "cut_resonance.csv", "cut_tmin.csv",
                        "fit_report.json"};
    result.reports["time_model"] = report;
    result.summary["n_atoms"] = fit.params.at("n_atoms");
    result.summary["n_atoms_sigma"] = fit.sigmas.at("n_atoms");
    result.fit_converged = fit.converged;
    return result;
}

/// Probe-detuning dependence of the differential observables in the averaging
/// window around t_min, with the model overlay.
inline ScenarioResult run_freq_scan(const ExperimentConfig& c,
                                    const std::filesystem::path& out_dir) {
    const double noise_power = detail::calibrated_noise_power(c);
    const double norm = detail::normalization_amplitude(c, noise_power);
    const double flux = detail::output_flux_amplitude(c);
    const double t_min_lab = c.profile.t_min + c.time_scan.time_origin;
    const double chi = detail::true_chi(c, t_min_lab);

    Table table;
    table.columns = {"delta_p_hz",      "delta_amp_n",          "delta_amp_sigma",
                     "delta_phase_deg", "delta_phase_sigma_deg", "model_delta_amp_n",
                     "model_delta_phase_deg"};
    const auto grid = c.probe_grid();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        GaussianSampler sampler(derive_seed(c.master_seed, i));
        const auto est = detail::measure_window(c, grid[i], chi, sampler, noise_power, norm, flux);
        const auto model = shift_observable(grid[i], chi, c.cavity);
        table.rows.push_back({hz_from_angular(grid[i]), est.delta_amp, est.delta_amp_sigma,
                              deg_from_rad(est.delta_phase), deg_from_rad(est.delta_phase_sigma),
                              model.delta_amp_n, deg_from_rad(model.delta_phase)});
    }
    write_table(out_dir / "freq_scan.csv", table);

    ScenarioResult result;
    result.artifacts = {"freq_scan.csv"};
    result.summary["chi_hz"] = hz_from_angular(chi);
    return result;
}

/// dc Stark detuning scan: parabola fit of delta_a(U) plus the 1/delta_a fit
/// of the phase change above the dispersive cut.
inline ScenarioResult run_detuning_scan(const ExperimentConfig& c,
                                        const std::filesystem::path& out_dir) {
    const double noise_power = detail::calibrated_noise_power(c);
    const double norm = detail::normalization_amplitude(c, noise_power);
    const double flux = detail::output_flux_amplitude(c);
    const double g1 = detail::window_coupling(c);
    const double n_atoms = c.detuning_scan.n_atoms;
    const double crit = c.time_scan.delta_a_crit;

    GaussianSampler da_sampler(derive_seed(c.master_seed, detail::seed_index_pointwise));

    Table table;
    table.columns = {"u_volts",        "delta_a_hz",          "delta_amp_n",
                     "delta_amp_sigma", "delta_phase_deg",     "delta_phase_sigma_deg",
                     "above_crit"};
    std::vector<WeightedPoint> parabola_points;
    std::vector<InverseDetuningPoint> phase_points;
    for (std::size_t i = 0; i < c.detuning_scan.voltages.size(); ++i) {
        const double u = c.detuning_scan.voltages[i];
        const double da_true =
            stark_detuning(u, c.detuning_scan.stark_coeff, c.detuning_scan.delta_a0);
        const double da_measured =
            da_true + (c.detuning_scan.delta_a_sigma > 0.0
                           ? c.detuning_scan.delta_a_sigma * da_sampler.normal()
                           : 0.0);
        const double chi = collective_shift(g1, n_atoms, -0.5 * n_atoms, da_true);

        GaussianSampler sampler(derive_seed(c.master_seed, i));
        const auto est = detail::measure_window(c, 0.0, chi, sampler, noise_power, norm, flux);
        const bool above = std::abs(da_measured) > crit;

        table.rows.push_back({u, hz_from_angular(da_measured), est.delta_amp,
                              est.delta_amp_sigma, deg_from_rad(est.delta_phase),
                              deg_from_rad(est.delta_phase_sigma), above ? 1.0 : 0.0});
        parabola_points.push_back({u, da_measured, c.detuning_scan.delta_a_sigma});
        phase_points.push_back({da_measured, est.delta_phase, est.delta_phase_sigma});
    }
    write_table(out_dir / "detuning_scan.csv", table);

    const FitResult parabola = fit_detuning_parabola(parabola_points);
    const FitResult inverse = fit_inverse_detuning(phase_points, g1, c.cavity.kappa, crit);

    nlohmann::json report;
    report["stark"] = {{"curvature_hz_per_v2", hz_from_angular(parabola.params.at("curvature"))},
                       {"u_min_v", parabola.params.at("t_min")},
                       {"delta_a0_hz", hz_from_angular(parabola.params.at("delta_min"))},
                       {"converged", parabola.converged}};
    report["inverse_detuning"] = {{"n_atoms", inverse.params.at("n_atoms")},
                                  {"n_atoms_sigma", inverse.sigmas.at("n_atoms")},
                                  {"delta_a_crit_hz", hz_from_angular(crit)},
                                  {"converged", inverse.converged}};
    report["injected_n_atoms"] = n_atoms;
    write_json(report, out_dir / "fit_report.json");

    ScenarioResult result;
    result.artifacts = {"detuning_scan.csv", "fit_report.json"};
    result.reports["fits"] = report;
    result.summary["n_atoms"] = inverse.params.at("n_atoms");
    result.fit_converged = parabola.converged && inverse.converged;
    return result;
}

/// Rabi-amplitude atom-number scan: MCP signal plus dispersive phase, with
/// the linear calibration fit that pins the atom-number axis.
inline ScenarioResult run_atom_scan(const ExperimentConfig& c,
                                    const std::filesystem::path& out_dir) {
    const double noise_power = detail::calibrated_noise_power(c);
    const double norm = detail::normalization_amplitude(c, noise_power);
    const double flux = detail::output_flux_amplitude(c);
    const double g1 = detail::window_coupling(c);
    const auto& scan = c.atom_scan;

    Table table;
    table.columns = {"omega_ratio",     "s_star_vns",          "signal_vns",
                     "delta_phase_deg", "delta_phase_sigma_deg", "n_atoms_true"};
    std::vector<CalibrationPoint> points;
    for (std::size_t i = 0; i < scan.omega_ratios.size(); ++i) {
        const double ratio = scan.omega_ratios[i];
        const double n = rabi_population(ratio, scan.n_max);
        const double s = scan.s_per_atom * n;
        const double chi = (n > 0.0) ? collective_shift(g1, n, -0.5 * n, scan.delta_a) : 0.0;

        GaussianSampler sampler(derive_seed(c.master_seed, i));
        const auto est = detail::measure_window(c, 0.0, chi, sampler, noise_power, norm, flux);

        table.rows.push_back({ratio, s + scan.s_offset, s, deg_from_rad(est.delta_phase),
                              deg_from_rad(est.delta_phase_sigma), n});
        points.push_back({mcp_signal(s + scan.s_offset, scan.s_offset), est.delta_phase,
                          est.delta_phase_sigma});
    }
    write_table(out_dir / "atom_scan.csv", table);

    const FitResult fit = fit_atom_calibration(points, g1, c.cavity.kappa, scan.delta_a);
    nlohmann::json report;
    report["n_max"] = fit.params.at("n_max");
    report["n_max_sigma"] = fit.sigmas.at("n_max");
    report["slope_deg_per_vns"] = deg_from_rad(fit.params.at("slope"));
    report["slope_sigma_deg_per_vns"] = deg_from_rad(fit.sigmas.at("slope"));
    report["converged"] = fit.converged;
    report["injected_n_max"] = scan.n_max;
    write_json(report, out_dir / "calibration_report.json");

    ScenarioResult result;
    result.artifacts = {"atom_scan.csv", "calibration_report.json"};
    result.reports["calibration"] = report;
    result.summary["n_max"] = fit.params.at("n_max");
    result.fit_converged = fit.converged;
    return result;
}

/// Photon-number dependence of the phase change: analytic suppression curve
/// with the operating-point marker and optional measured points.
inline ScenarioResult run_power_scan(const ExperimentConfig& c,
                                     const std::filesystem::path& out_dir) {
    const double g1 = detail::window_coupling(c);
    const double chi0 =
        collective_shift(g1, c.ensemble.n_atoms, c.ensemble.jz, c.power_scan.delta_a);
    const double n_crit = critical_photon_number(g1, c.power_scan.delta_a);
    const double noise_power = detail::calibrated_noise_power(c);

    auto grid = c.power_scan.photon_numbers;
    bool marker_in_grid = false;
    for (double n : grid)
        if (n == c.power_scan.marker_n_c)
            marker_in_grid = true;
    if (!marker_in_grid)
        grid.push_back(c.power_scan.marker_n_c);

    Table table;
    table.columns = {"n_c", "delta_phase_deg", "delta_phase_sigma_deg",
                     "model_delta_phase_deg", "is_operating_point"};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double n_c = grid[i];
        const double chi = suppressed_shift(chi0, n_c, n_crit);
        const double model_phase = std::atan(2.0 * chi / c.cavity.kappa);
        double value = model_phase, sigma = 0.0;
        if (c.power_scan.noisy && n_c > 0.0) {
            GaussianSampler sampler(derive_seed(c.master_seed, i));
            const double flux = std::sqrt(n_c * c.cavity.kappa_out);
            const auto est =
                detail::measure_window(c, 0.0, chi, sampler, noise_power, flux, flux);
            value = est.delta_phase;
            sigma = est.delta_phase_sigma;
        }
        table.rows.push_back({n_c, deg_from_rad(value), deg_from_rad(sigma),
                              deg_from_rad(model_phase),
                              n_c == c.power_scan.marker_n_c ? 1.0 : 0.0});
    }
    write_table(out_dir / "power_scan.csv", table);

    ScenarioResult result;
    result.artifacts = {"power_scan.csv"};
    result.summary["n_crit"] = n_crit;
    result.summary["chi0_hz"] = hz_from_angular(chi0);
    return result;
}

/// Optimal-measurement forecast: JSON report and aligned text table.
inline ScenarioResult run_forecast(const ExperimentConfig& c,
                                   const std::filesystem::path& out_dir) {
    const DesignForecast f = forecast(c.forecast);

    nlohmann::json report;
    report["snr"] = f.snr;
    report["sigma_phi_rad"] = f.sigma_phi;
    report["sigma_dphi_rad"] = f.sigma_dphi;
    report["rel_sigma_n"] = f.rel_sigma_n;
    report["abs_sigma_n"] = f.abs_sigma_n;
    report["x_opt"] = f.x_opt;
    report["delta_a_opt_hz"] = hz_from_angular(f.delta_a_opt);
    report["k_averages"] = f.k_averages;
    report["diagnostics"] = {{"g_n_over_delta_a", f.g_n_over_delta_a},
                             {"kappa_over_delta_a", f.kappa_over_delta_a},
                             {"n_c_over_n_crit", f.n_c_over_n_crit},
                             {"n_atoms_over_n_crit", f.n_atoms_over_n_crit}};
    report["warnings"] = f.warnings;
    write_json(report, out_dir / "forecast.json");

    std::ofstream txt(out_dir / "forecast.txt");
    if (!txt)
        throw IoError("cannot open forecast.txt for writing");
    char line[128];
    auto emit = [&](const char* name, double value, const char* unit) {
        std::snprintf(line, sizeof(line), "%-28s %14.6g  %s\n", name, value, unit);
        txt << line;
    };
    emit("single-shot power SNR", f.snr, "");
    emit("sigma_phi", f.sigma_phi, "rad");
    emit("sigma_delta_phi", f.sigma_dphi, "rad");
    emit("sigma_N / N", 100.0 * f.rel_sigma_n, "%");
    emit("sigma_N", f.abs_sigma_n, "atoms");
    emit("x_opt = 2 chi / kappa", f.x_opt, "");
    emit("delta_a_opt", hz_from_angular(f.delta_a_opt) / 1e6, "MHz");
    emit("k averages", static_cast<double>(f.k_averages), "");
    for (const auto& w : f.warnings)
        txt << "warning: " << w << "\n";

    ScenarioResult result;
    result.artifacts = {"forecast.json", "forecast.txt"};
    result.reports["forecast"] = report;
    result.summary["snr"] = f.snr;
    result.summary["rel_sigma_n"] = f.rel_sigma_n;
    result.summary["abs_sigma_n"] = f.abs_sigma_n;
    return result;
}

/// Dispatch on the configured scenario, writing artifacts and run.json into
/// out_dir (created if needed).
inline ScenarioResult run_scenario(const ExperimentConfig& c,
                                   const std::filesystem::path& out_dir) {
    c.validate();
    std::filesystem::create_directories(out_dir);
    const std::string started = detail::iso_utc_now();

    ScenarioResult result;
    switch (c.scenario) {
    case Scenario::spectrum: result = run_spectrum(c, out_dir); break;
    case Scenario::time_scan: result = run_time_scan(c, out_dir); break;
    case Scenario::freq_scan: result = run_freq_scan(c, out_dir); break;
    case Scenario::detuning_scan: result = run_detuning_scan(c, out_dir); break;
    case Scenario::atom_scan: result = run_atom_scan(c, out_dir); break;
    case Scenario::power_scan: result = run_power_scan(c, out_dir); break;
    case Scenario::forecast: result = run_forecast(c, out_dir); break;
    }

    nlohmann::json run;
    run["config_hash"] = config_hash(c);
    run["seed"] = c.master_seed;
    run["scenario"] = to_string(c.scenario);
    run["started_utc"] = started;
    run["finished_utc"] = detail::iso_utc_now();
    run["artifacts"] = result.artifacts;
    run["summary"] = result.summary;
    run["fit_converged"] = result.fit_converged;
    write_json(run, out_dir / "run.json");
    result.artifacts.push_back("run.json");
    return result;
}

/// Reload a time-scan grid CSV (as written by run_time_scan) into TimeScanData.
inline TimeScanData read_time_scan_csv(const std::filesystem::path& path) {
    const Table table = read_table(path);
    const std::size_t ct = table.column_index("t_s");
    const std::size_t cp = table.column_index("delta_p_hz");
    const std::size_t ca = table.column_index("delta_amp_n");
    const std::size_t cas = table.column_index("delta_amp_sigma");
    const std::size_t cf = table.column_index("delta_phase_deg");
    const std::size_t cfs = table.column_index("delta_phase_sigma_deg");

    TimeScanData data;
    for (const auto& row : table.rows) {
        const double dp = angular_from_hz(row[cp]);
        if (data.probe_detunings.empty() || data.probe_detunings.back() != dp) {
            bool seen = false;
            for (double v : data.probe_detunings)
                if (v == dp)
                    seen = true;
            if (!seen)
                data.probe_detunings.push_back(dp);
        }
        if (data.probe_detunings.size() == 1)
            data.times.push_back(row[ct]);
    }
    const std::size_t np = data.probe_detunings.size();
    const std::size_t nt = data.times.size();
    if (np * nt != table.rows.size())
        throw IoError("time scan csv is not a rectangular probe-major grid");
    data.delta_amp.assign(np, std::vector<double>(nt));
    data.delta_amp_sigma.assign(np, std::vector<double>(nt));
    data.delta_phase.assign(np, std::vector<double>(nt));
    data.delta_phase_sigma.assign(np, std::vector<double>(nt));
    for (std::size_t i = 0; i < np; ++i)
        for (std::size_t j = 0; j < nt; ++j) {
            const auto& row = table.rows[i * nt + j];
            data.delta_amp[i][j] = row[ca];
            data.delta_amp_sigma[i][j] = row[cas];
            data.delta_phase[i][j] = rad_from_deg(row[cf]);
            data.delta_phase_sigma[i][j] = rad_from_deg(row[cfs]);
        }
    data.validate();
    return data;
}

} // namespace rydsim
