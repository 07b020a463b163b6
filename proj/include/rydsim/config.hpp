#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rydsim/cavity.hpp"
#include "rydsim/design.hpp"
#include "rydsim/detection.hpp"
#include "rydsim/dispersive.hpp"
#include "rydsim/units.hpp"

// Configuration: one structured JSON document with a versioned schema. The
// file speaks Hz, degrees and volts; everything is converted to angular
// frequencies and radians exactly once, on load. Missing keys fall back to
// the defaults, which carry the measured apparatus parameters.

namespace rydsim {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Scenario {
    spectrum,
    time_scan,
    freq_scan,
    detuning_scan,
    atom_scan,
    power_scan,
    forecast,
};

inline Scenario scenario_from_string(const std::string& name) {
    if (name == "spectrum") return Scenario::spectrum;
    if (name == "time_scan") return Scenario::time_scan;
    if (name == "freq_scan") return Scenario::freq_scan;
    if (name == "detuning_scan") return Scenario::detuning_scan;
    if (name == "atom_scan") return Scenario::atom_scan;
    if (name == "power_scan") return Scenario::power_scan;
    if (name == "forecast") return Scenario::forecast;
    throw ConfigError("unknown scenario: " + name);
}

inline std::string to_string(Scenario s) {
    switch (s) {
    case Scenario::spectrum: return "spectrum";
    case Scenario::time_scan: return "time_scan";
    case Scenario::freq_scan: return "freq_scan";
    case Scenario::detuning_scan: return "detuning_scan";
    case Scenario::atom_scan: return "atom_scan";
    case Scenario::power_scan: return "power_scan";
    case Scenario::forecast: return "forecast";
    }
    throw ConfigError("unknown scenario enum value");
}

struct ProbeConfig {
    double n_c = 600.0;               // intracavity photons at resonance
    double sample_dt = 10e-9;         // ADC sampling interval (s)
    double cycle_period = 0.04;       // 25 Hz repetition
    double record_duration = 12e-6;   // per-cycle record length (s)
    double reference_window = 2e-6;   // reference taken from the record tail (s)
    double grid_span_kappa = 1.0;     // probe grid spans +- span * kappa
    double grid_step_kappa = 0.125;   // in steps of step * kappa
    std::vector<double> detunings;    // explicit grid override (rad/s)
};

struct SpectrumConfig {
    double span = angular_from_hz(10e6); // half-span of the sweep (rad/s)
    std::size_t points = 81;
    double amplitude_sigma = 0.0;        // per-point gaussian noise
    double phase_sigma = 0.0;            // rad
    double overlay_chi = 0.0;            // dashed shifted-spectrum overlay (rad/s), 0 = off
};

struct TimeScanConfig {
    double time_origin = 0.0;                      // true t0 used in synthesis (s)
    double fit_t0_guess = 0.0;                     // starting point for the fit
    double delta_a_crit = default_delta_a_crit;    // dispersive cut (rad/s)
    double window = 300e-9;                        // averaging window around t_min (s)
};

struct DetuningScanConfig {
    std::vector<double> voltages;                   // electrode potentials (V)
    double stark_coeff = angular_from_hz(-0.62e6);  // rad/s per V^2
    double delta_a0 = angular_from_hz(20.07e6);     // zero-field detuning (rad/s)
    double n_atoms = 4300.0;                        // ensemble size for this run
    double delta_a_sigma = 0.0;                     // measurement noise on delta_a (rad/s)
};

struct AtomScanConfig {
    std::vector<double> omega_ratios;            // Omega / Omega_pi grid
    double delta_a = angular_from_hz(11.25e6);   // fixed detuning (rad/s)
    double n_max = 4100.0;                       // atoms at a full pi pulse
    double s_per_atom = 2.5e-4;                  // MCP volt-ns per atom
    double s_offset = 0.79;                      // stray-state background S0 (V ns)
};

struct PowerScanConfig {
    std::vector<double> photon_numbers; // n_c grid
    double delta_a = angular_from_hz(17.67e6);
    double marker_n_c = 600.0;          // operating-point marker
    bool noisy = false;                 // add 1/sqrt(SNR k)-scaled scatter
};

struct ExperimentConfig {
    int schema_version = 1;
    Scenario scenario = Scenario::time_scan;
    std::uint64_t master_seed = 20160906;
    std::string out_dir = "out";

    CavityMode cavity;
    AtomEnsemble ensemble;
    DetuningProfile profile;
    NoiseModel noise;
    AveragingPlan plan;
    ProbeConfig probe;

    SpectrumConfig spectrum;
    TimeScanConfig time_scan;
    DetuningScanConfig detuning_scan;
    AtomScanConfig atom_scan;
    PowerScanConfig power_scan;
    ForecastScenario forecast;

    /// Probe grid in rad/s; built from the kappa-relative span unless an
    /// explicit list was configured.
    std::vector<double> probe_grid() const {
        if (!probe.detunings.empty())
            return probe.detunings;
        std::vector<double> grid;
        const int steps = static_cast<int>(probe.grid_span_kappa / probe.grid_step_kappa + 0.5);
        for (int i = -steps; i <= steps; ++i)
            grid.push_back(static_cast<double>(i) * probe.grid_step_kappa * cavity.kappa);
        return grid;
    }

    void validate() const {
        cavity.validate();
        ensemble.validate();
        profile.validate();
        noise.validate();
        plan.validate();
        if (!(probe.n_c >= 0.0) || !(probe.sample_dt > 0.0) || !(probe.cycle_period > 0.0))
            throw ConfigError("probe: n_c, sample_dt, cycle_period must be positive");
        if (!(probe.record_duration > probe.reference_window) || !(probe.reference_window > 0.0))
            throw ConfigError("probe: need record_duration > reference_window > 0");
        if (plan.boxcar_len < probe.sample_dt)
            throw ConfigError("averaging: boxcar must be at least one sample long");
        if (probe_grid().empty())
            throw ConfigError("probe: empty detuning grid");
        switch (scenario) {
        case Scenario::spectrum:
            if (spectrum.points < 5)
                throw ConfigError("spectrum: need at least 5 sweep points");
            break;
        case Scenario::detuning_scan:
            if (detuning_scan.voltages.empty())
                throw ConfigError("detuning_scan: empty voltage grid");
            break;
        case Scenario::atom_scan:
            if (atom_scan.omega_ratios.empty())
                throw ConfigError("atom_scan: empty omega_ratio grid");
            break;
        case Scenario::power_scan:
            if (power_scan.photon_numbers.empty())
                throw ConfigError("power_scan: empty photon grid");
            break;
        case Scenario::forecast:
            forecast.validate();
            break;
        default:
            break;
        }
    }
};

/// Measured apparatus parameters as defaults: 21.532 GHz TE301 mode with
/// kappa/2pi = 4.1 MHz critically coupled, 17.5 kHz peak single-atom coupling,
/// the 6.65 MHz/us^2 + 20.07 MHz detuning parabola with 2.4 MHz ac Stark
/// correction, 900 m/s beam through an 8 mm cavity, 34 noise photons, 25 Hz
/// cycle, 10 ns sampling, 100 ns boxcar, 100 x 500 averaging.
inline ExperimentConfig default_config() {
    ExperimentConfig c;
    c.cavity.omega_c = angular_from_hz(21.532e9);
    c.cavity.kappa = angular_from_hz(4.1e6);
    c.cavity.kappa_out = angular_from_hz(2.05e6);
    c.cavity.length_l = 8.0e-3;
    c.cavity.center_z = 4.0e-3;

    c.ensemble.n_atoms = 3300.0;
    c.ensemble.jz = -0.5 * c.ensemble.n_atoms;
    c.ensemble.g1_peak = angular_from_hz(17.5e3);
    c.ensemble.omega_a0 = angular_from_hz(21.5299e9);
    c.ensemble.velocity = 900.0;

    c.profile.curvature = angular_from_hz(6.65e18);
    c.profile.t_min = 3.96e-6;
    c.profile.delta_min = angular_from_hz(20.07e6);
    c.profile.ac_stark_peak = angular_from_hz(2.4e6);
    c.profile.ac_sign = +1;

    c.noise.n_noise = 34.0;
    c.noise.drift_rate = rad_from_deg(0.3) / 60.0;
    c.noise.phase_offset = rad_from_deg(-0.104);

    c.plan = AveragingPlan{100, 500, 100e-9};

    for (int i = 0; i <= 20; ++i)
        c.atom_scan.omega_ratios.push_back(static_cast<double>(i) / 20.0);
    for (double u = 0.0; u <= 5.0 + 1e-9; u += 0.25)
        c.detuning_scan.voltages.push_back(u);
    for (double decade = 1.0; decade <= 1.0e7; decade *= 10.0) {
        c.power_scan.photon_numbers.push_back(decade);
        if (3.0 * decade <= 1.0e7)
            c.power_scan.photon_numbers.push_back(3.0 * decade);
    }

    c.forecast.n_atoms = 4000.0;
    c.forecast.g_n = angular_from_hz(1.1e6);
    c.forecast.kappa = angular_from_hz(300e3);
    c.forecast.kappa_out = angular_from_hz(300e3);
    c.forecast.n_c = 880.0;
    c.forecast.tau = 50e-6;
    c.forecast.n_noise = 1.0;
    c.forecast.k_averages = 1;
    return c;
}

namespace detail {

inline double get_hz(const nlohmann::json& j, const char* key, double fallback_angular) {
    return j.contains(key) ? angular_from_hz(j.at(key).get<double>()) : fallback_angular;
}

inline double get_deg(const nlohmann::json& j, const char* key, double fallback_rad) {
    return j.contains(key) ? rad_from_deg(j.at(key).get<double>()) : fallback_rad;
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

} // namespace detail

/// Build a config from a JSON document layered over the defaults.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    using detail::get_deg;
    using detail::get_hz;
    using detail::get_or;

    ExperimentConfig c = default_config();
    if (j.contains("schema_version") && j.at("schema_version").get<int>() != c.schema_version)
        throw ConfigError("unsupported schema_version");
    if (j.contains("scenario"))
        c.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    c.master_seed = get_or<std::uint64_t>(j, "seed", c.master_seed);
    c.out_dir = get_or<std::string>(j, "output_dir", c.out_dir);

    if (j.contains("cavity")) {
        const auto& v = j.at("cavity");
        c.cavity.omega_c = get_hz(v, "frequency_hz", c.cavity.omega_c);
        c.cavity.kappa = get_hz(v, "kappa_hz", c.cavity.kappa);
        c.cavity.kappa_out = get_hz(v, "kappa_out_hz", c.cavity.kappa_out);
        c.cavity.length_l = get_or(v, "length_m", c.cavity.length_l);
        c.cavity.center_z = get_or(v, "center_m", c.cavity.center_z);
    }
    if (j.contains("ensemble")) {
        const auto& v = j.at("ensemble");
        c.ensemble.n_atoms = get_or(v, "n_atoms", c.ensemble.n_atoms);
        c.ensemble.jz = v.contains("polarization")
                            ? v.at("polarization").get<double>() * c.ensemble.n_atoms
                            : -0.5 * c.ensemble.n_atoms;
        c.ensemble.g1_peak = get_hz(v, "g1_peak_hz", c.ensemble.g1_peak);
        c.ensemble.omega_a0 = get_hz(v, "transition_frequency_hz", c.ensemble.omega_a0);
        c.ensemble.velocity = get_or(v, "velocity_m_s", c.ensemble.velocity);
    }
    if (j.contains("detuning")) {
        const auto& v = j.at("detuning");
        c.profile.curvature = get_hz(v, "curvature_hz_per_s2", c.profile.curvature);
        c.profile.t_min = get_or(v, "t_min_s", c.profile.t_min);
        c.profile.delta_min = get_hz(v, "delta_min_hz", c.profile.delta_min);
        c.profile.ac_stark_peak = get_hz(v, "ac_stark_peak_hz", c.profile.ac_stark_peak);
        c.profile.ac_sign = get_or(v, "ac_sign", c.profile.ac_sign);
    }
    if (j.contains("noise")) {
        const auto& v = j.at("noise");
        c.noise.n_noise = get_or(v, "n_noise", c.noise.n_noise);
        c.noise.psd = get_or(v, "psd_w_per_hz", c.noise.psd);
        c.noise.gain = get_or(v, "gain", c.noise.gain);
        if (v.contains("drift_deg_per_min"))
            c.noise.drift_rate = rad_from_deg(v.at("drift_deg_per_min").get<double>()) / 60.0;
        c.noise.phase_offset = get_deg(v, "phase_offset_deg", c.noise.phase_offset);
    }
    if (j.contains("averaging")) {
        const auto& v = j.at("averaging");
        c.plan.inner_averages = get_or<std::size_t>(v, "inner", c.plan.inner_averages);
        c.plan.outer_averages = get_or<std::size_t>(v, "outer", c.plan.outer_averages);
        c.plan.boxcar_len = get_or(v, "boxcar_s", c.plan.boxcar_len);
    }
    if (j.contains("probe")) {
        const auto& v = j.at("probe");
        c.probe.n_c = get_or(v, "n_c", c.probe.n_c);
        c.probe.sample_dt = get_or(v, "sample_dt_s", c.probe.sample_dt);
        c.probe.cycle_period = get_or(v, "cycle_period_s", c.probe.cycle_period);
        c.probe.record_duration = get_or(v, "record_duration_s", c.probe.record_duration);
        c.probe.reference_window = get_or(v, "reference_window_s", c.probe.reference_window);
        c.probe.grid_span_kappa = get_or(v, "grid_span_kappa", c.probe.grid_span_kappa);
        c.probe.grid_step_kappa = get_or(v, "grid_step_kappa", c.probe.grid_step_kappa);
        if (v.contains("detunings_hz"))
            for (double f : v.at("detunings_hz").get<std::vector<double>>())
                c.probe.detunings.push_back(angular_from_hz(f));
    }
    if (j.contains("spectrum")) {
        const auto& v = j.at("spectrum");
        c.spectrum.span = get_hz(v, "span_hz", c.spectrum.span);
        c.spectrum.points = get_or<std::size_t>(v, "points", c.spectrum.points);
        c.spectrum.amplitude_sigma = get_or(v, "amplitude_sigma", c.spectrum.amplitude_sigma);
        c.spectrum.phase_sigma = get_deg(v, "phase_sigma_deg", c.spectrum.phase_sigma);
        c.spectrum.overlay_chi = get_hz(v, "overlay_chi_hz", c.spectrum.overlay_chi);
    }
    if (j.contains("time_scan")) {
        const auto& v = j.at("time_scan");
        c.time_scan.time_origin = get_or(v, "time_origin_s", c.time_scan.time_origin);
        c.time_scan.fit_t0_guess = get_or(v, "fit_t0_guess_s", c.time_scan.fit_t0_guess);
        c.time_scan.delta_a_crit = get_hz(v, "delta_a_crit_hz", c.time_scan.delta_a_crit);
        c.time_scan.window = get_or(v, "window_s", c.time_scan.window);
    }
    if (j.contains("detuning_scan")) {
        const auto& v = j.at("detuning_scan");
        if (v.contains("voltages"))
            c.detuning_scan.voltages = v.at("voltages").get<std::vector<double>>();
        c.detuning_scan.stark_coeff =
            get_hz(v, "stark_coeff_hz_per_v2", c.detuning_scan.stark_coeff);
        c.detuning_scan.delta_a0 = get_hz(v, "delta_a0_hz", c.detuning_scan.delta_a0);
        c.detuning_scan.n_atoms = get_or(v, "n_atoms", c.detuning_scan.n_atoms);
        c.detuning_scan.delta_a_sigma =
            get_hz(v, "delta_a_sigma_hz", c.detuning_scan.delta_a_sigma);
    }
    if (j.contains("atom_scan")) {
        const auto& v = j.at("atom_scan");
        if (v.contains("omega_ratios"))
            c.atom_scan.omega_ratios = v.at("omega_ratios").get<std::vector<double>>();
        c.atom_scan.delta_a = get_hz(v, "delta_a_hz", c.atom_scan.delta_a);
        c.atom_scan.n_max = get_or(v, "n_max", c.atom_scan.n_max);
        c.atom_scan.s_per_atom = get_or(v, "s_per_atom_vns", c.atom_scan.s_per_atom);
        c.atom_scan.s_offset = get_or(v, "s_offset_vns", c.atom_scan.s_offset);
    }
    if (j.contains("power_scan")) {
        const auto& v = j.at("power_scan");
        if (v.contains("photon_numbers"))
            c.power_scan.photon_numbers = v.at("photon_numbers").get<std::vector<double>>();
        c.power_scan.delta_a = get_hz(v, "delta_a_hz", c.power_scan.delta_a);
        c.power_scan.marker_n_c = get_or(v, "marker_n_c", c.power_scan.marker_n_c);
        c.power_scan.noisy = get_or(v, "noisy", c.power_scan.noisy);
    }
    if (j.contains("forecast")) {
        const auto& v = j.at("forecast");
        c.forecast.n_atoms = get_or(v, "n_atoms", c.forecast.n_atoms);
        c.forecast.g_n = get_hz(v, "g_n_hz", c.forecast.g_n);
        c.forecast.kappa = get_hz(v, "kappa_hz", c.forecast.kappa);
        c.forecast.kappa_out = get_hz(v, "kappa_out_hz", c.forecast.kappa_out);
        c.forecast.n_c = get_or(v, "n_c", c.forecast.n_c);
        c.forecast.tau = get_or(v, "tau_s", c.forecast.tau);
        c.forecast.n_noise = get_or(v, "n_noise", c.forecast.n_noise);
        c.forecast.k_averages = get_or<std::size_t>(v, "k_averages", c.forecast.k_averages);
    }
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config field error in " + path.string() + ": " + e.what());
    }
}

/// Canonical JSON image of a config (nlohmann sorts object keys, so the hash
/// is stable under field reordering in the source file).
inline nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["schema_version"] = c.schema_version;
    j["scenario"] = to_string(c.scenario);
    j["seed"] = c.master_seed;
    j["output_dir"] = c.out_dir;
    j["cavity"] = {{"frequency_hz", hz_from_angular(c.cavity.omega_c)},
                   {"kappa_hz", hz_from_angular(c.cavity.kappa)},
                   {"kappa_out_hz", hz_from_angular(c.cavity.kappa_out)},
                   {"length_m", c.cavity.length_l},
                   {"center_m", c.cavity.center_z}};
    j["ensemble"] = {{"n_atoms", c.ensemble.n_atoms},
                     {"polarization", c.ensemble.n_atoms > 0.0
                                          ? c.ensemble.jz / c.ensemble.n_atoms
                                          : -0.5},
                     {"g1_peak_hz", hz_from_angular(c.ensemble.g1_peak)},
                     {"transition_frequency_hz", hz_from_angular(c.ensemble.omega_a0)},
                     {"velocity_m_s", c.ensemble.velocity}};
    j["detuning"] = {{"curvature_hz_per_s2", hz_from_angular(c.profile.curvature)},
                     {"t_min_s", c.profile.t_min},
                     {"delta_min_hz", hz_from_angular(c.profile.delta_min)},
                     {"ac_stark_peak_hz", hz_from_angular(c.profile.ac_stark_peak)},
                     {"ac_sign", c.profile.ac_sign}};
    j["noise"] = {{"n_noise", c.noise.n_noise},
                  {"psd_w_per_hz", c.noise.psd},
                  {"gain", c.noise.gain},
                  {"drift_deg_per_min", deg_from_rad(c.noise.drift_rate) * 60.0},
                  {"phase_offset_deg", deg_from_rad(c.noise.phase_offset)}};
    j["averaging"] = {{"inner", c.plan.inner_averages},
                      {"outer", c.plan.outer_averages},
                      {"boxcar_s", c.plan.boxcar_len}};
    nlohmann::json probe = {{"n_c", c.probe.n_c},
                            {"sample_dt_s", c.probe.sample_dt},
                            {"cycle_period_s", c.probe.cycle_period},
                            {"record_duration_s", c.probe.record_duration},
                            {"reference_window_s", c.probe.reference_window},
                            {"grid_span_kappa", c.probe.grid_span_kappa},
                            {"grid_step_kappa", c.probe.grid_step_kappa}};
    if (!c.probe.detunings.empty()) {
        std::vector<double> hz;
        for (double w : c.probe.detunings)
            hz.push_back(hz_from_angular(w));
        probe["detunings_hz"] = hz;
    }
    j["probe"] = probe;
    j["spectrum"] = {{"span_hz", hz_from_angular(c.spectrum.span)},
                     {"points", c.spectrum.points},
                     {"amplitude_sigma", c.spectrum.amplitude_sigma},
                     {"phase_sigma_deg", deg_from_rad(c.spectrum.phase_sigma)},
                     {"overlay_chi_hz", hz_from_angular(c.spectrum.overlay_chi)}};
    j["time_scan"] = {{"time_origin_s", c.time_scan.time_origin},
                      {"fit_t0_guess_s", c.time_scan.fit_t0_guess},
                      {"delta_a_crit_hz", hz_from_angular(c.time_scan.delta_a_crit)},
                      {"window_s", c.time_scan.window}};
    j["detuning_scan"] = {{"voltages", c.detuning_scan.voltages},
                          {"stark_coeff_hz_per_v2", hz_from_angular(c.detuning_scan.stark_coeff)},
                          {"delta_a0_hz", hz_from_angular(c.detuning_scan.delta_a0)},
                          {"n_atoms", c.detuning_scan.n_atoms},
                          {"delta_a_sigma_hz", hz_from_angular(c.detuning_scan.delta_a_sigma)}};
    j["atom_scan"] = {{"omega_ratios", c.atom_scan.omega_ratios},
                      {"delta_a_hz", hz_from_angular(c.atom_scan.delta_a)},
                      {"n_max", c.atom_scan.n_max},
                      {"s_per_atom_vns", c.atom_scan.s_per_atom},
                      {"s_offset_vns", c.atom_scan.s_offset}};
    j["power_scan"] = {{"photon_numbers", c.power_scan.photon_numbers},
                       {"delta_a_hz", hz_from_angular(c.power_scan.delta_a)},
                       {"marker_n_c", c.power_scan.marker_n_c},
                       {"noisy", c.power_scan.noisy}};
    j["forecast"] = {{"n_atoms", c.forecast.n_atoms},
                     {"g_n_hz", hz_from_angular(c.forecast.g_n)},
                     {"kappa_hz", hz_from_angular(c.forecast.kappa)},
                     {"kappa_out_hz", hz_from_angular(c.forecast.kappa_out)},
                     {"n_c", c.forecast.n_c},
                     {"tau_s", c.forecast.tau},
                     {"n_noise", c.forecast.n_noise},
                     {"k_averages", c.forecast.k_averages}};
    return j;
}

/// FNV-1a over the canonical dump.
inline std::string config_hash(const ExperimentConfig& c) {
    const std::string dump = to_json(c).dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace rydsim
