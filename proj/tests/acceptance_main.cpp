// Acceptance suite: one self-contained check per criterion, each printed as a
// PASS/FAIL line with the measured values. Exit code = number of failures.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "rydsim/cavity.hpp"
#include "rydsim/config.hpp"
#include "rydsim/design.hpp"
#include "rydsim/detection.hpp"
#include "rydsim/dispersive.hpp"
#include "rydsim/fits.hpp"
#include "rydsim/random.hpp"
#include "rydsim/scenarios.hpp"
#include "rydsim/units.hpp"

using namespace rydsim;

namespace {

struct Checker {
    bool ok = true;
    std::string detail;

    void require(bool condition, const std::string& what) {
        if (!condition) {
            ok = false;
            if (!detail.empty())
                detail += "; ";
            detail += what;
        }
    }
};

int g_failures = 0;

void criterion(int id, const std::string& name, const std::function<void(Checker&)>& body) {
    Checker check;
    try {
        body(check);
    } catch (const std::exception& e) {
        check.ok = false;
        check.require(false, std::string("exception: ") + e.what());
    }
    if (check.ok) {
        std::printf("PASS  criterion %d: %s\n", id, name.c_str());
    } else {
        std::printf("FAIL  criterion %d: %s [%s]\n", id, name.c_str(), check.detail.c_str());
        ++g_failures;
    }
}

CavityMode paper_cavity() {
    CavityMode c;
    c.omega_c = angular_from_hz(21.532e9);
    c.kappa = angular_from_hz(4.1e6);
    c.kappa_out = angular_from_hz(2.05e6);
    c.length_l = 8.0e-3;
    c.center_z = 4.0e-3;
    return c;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

double mean_of(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v)
        acc += x;
    return acc / static_cast<double>(v.size());
}

} // namespace

int main() {
    std::printf("acceptance suite: dispersive readout simulator\n");

    criterion(1, "phase-shift algebra at kappa/2pi = 4.1 MHz, chi/2pi = -49 kHz", [](Checker& c) {
        const auto cav = paper_cavity();
        const double chi = angular_from_hz(-49.0e3);
        const double dphi_deg = deg_from_rad(shift_observable(0.0, chi, cav).delta_phase);
        c.require(std::abs(dphi_deg - (-1.37)) <= 0.06,
                  "delta_phi = " + fmt(dphi_deg) + " deg, expected -1.37 +- 0.06");
        c.require(std::abs(dphi_deg - (-1.39)) <= 0.06,
                  "delta_phi = " + fmt(dphi_deg) + " deg, not within 0.06 of -1.39");
        const double chi_hz = hz_from_angular(chi_from_phase(rad_from_deg(-1.39), cav));
        c.require(std::abs(chi_hz - (-49.7e3)) <= 0.1e3,
                  "chi_from_phase(-1.39 deg) = " + fmt(chi_hz) + " Hz, expected -49.7 kHz");
        c.require(std::abs(chi_hz - (-49.0e3)) <= 2.0e3,
                  "chi_from_phase(-1.39 deg) = " + fmt(chi_hz) + " Hz, not within 2 kHz of -49 kHz");
    });

    criterion(2, "collective coupling g_N for g1/2pi = 17.5 kHz, N = 3300", [](Checker& c) {
        const double g_n_hz = hz_from_angular(collective_coupling(angular_from_hz(17.5e3), 3300.0));
        c.require(std::abs(g_n_hz - 1.005e6) <= 1.0e3,
                  "g_N = " + fmt(g_n_hz) + " Hz, expected 1.005 MHz");
        c.require(std::abs(g_n_hz - 1.01e6) <= 2.0e4,
                  "g_N = " + fmt(g_n_hz) + " Hz, not within 1.01(2) MHz");
    });

    criterion(3, "optimal ratio x_opt and objective minimum", [](Checker& c) {
        const double x = optimal_ratio();
        c.require(std::abs(x - 0.7862) <= 1e-4, "x_opt = " + fmt(x) + ", expected 0.7862 +- 1e-4");
        const double quartic = x * x * x * x + x * x - 1.0;
        c.require(std::abs(quartic) <= 1e-12,
                  "x_opt quartic residual = " + fmt(quartic) + ", expected <= 1e-12");
        const double objective = atom_uncertainty_objective(x);
        c.require(std::abs(objective - 3.330) <= 0.005,
                  "objective = " + fmt(objective) + ", expected 3.330 +- 0.005");
    });

    criterion(4, "single-shot forecast for the upgraded apparatus", [](Checker& c) {
        ForecastScenario s;
        s.n_atoms = 4000.0;
        s.g_n = angular_from_hz(1.1e6);
        s.kappa = angular_from_hz(300e3);
        s.kappa_out = angular_from_hz(300e3);
        s.n_c = 880.0;
        s.tau = 50e-6;
        s.n_noise = 1.0;
        s.k_averages = 1;
        const auto f = forecast(s);
        c.require(std::abs(f.snr - 8.3e4) <= 0.05 * 8.3e4,
                  "SNR = " + fmt(f.snr) + ", expected 8.3e4 +- 5%");
        c.require(std::abs(f.rel_sigma_n - 0.012) <= 0.001,
                  "sigma_N/N = " + fmt(f.rel_sigma_n) + ", expected 1.2% +- 0.1pp");
        c.require(f.abs_sigma_n >= 44.0 && f.abs_sigma_n <= 52.0,
                  "sigma_N = " + fmt(f.abs_sigma_n) + ", expected in [44, 52]");
        const double da_mhz = hz_from_angular(f.delta_a_opt) / 1e6;
        c.require(std::abs(da_mhz - 10.3) <= 0.3,
                  "delta_a_opt = " + fmt(da_mhz) + " MHz, expected 10.3 +- 0.3");
        c.require(f.abs_sigma_n < std::sqrt(s.n_atoms),
                  "sigma_N = " + fmt(f.abs_sigma_n) + " not below sqrt(N) = 63");
    });

    criterion(5, "eigenvalue oracle vs photon-number suppression", [](Checker& c) {
        const double g1 = angular_from_hz(17.5e3);
        const double delta_a = angular_from_hz(17.7e6);
        const double n_atoms = 10.0; // keeps n/N >= 100 over the whole range
        const double chi0 = collective_shift(g1, n_atoms, -0.5 * n_atoms, delta_a);
        const double n_crit = critical_photon_number(g1, delta_a);
        for (double n = 1e3; n <= 1e6; n *= 10.0) {
            // the n*omega_c ladder cancels exactly in the difference
            const double fd = tc_eigenvalue(n + 1.0, -0.5 * n_atoms, n_atoms, g1, delta_a, 0.0) -
                              tc_eigenvalue(n, -0.5 * n_atoms, n_atoms, g1, delta_a, 0.0);
            const double oracle = suppressed_shift(chi0, n, n_crit);
            c.require(std::abs(fd / oracle - 1.0) <= 0.01,
                      "finite difference off by " + fmt(std::abs(fd / oracle - 1.0)) +
                          " at n = " + fmt(n));
        }
        const double half = suppressed_shift(chi0, 3.0 * n_crit, n_crit);
        c.require(std::abs(half - 0.5 * chi0) <= 1e-14 * std::abs(chi0),
                  "suppressed_shift(3 n_crit) != chi0/2 exactly");
    });

    criterion(6, "Monte-Carlo phase spread vs 1/sqrt(SNR), 1e3 replicas", [](Checker& c) {
        const auto start = std::chrono::steady_clock::now();
        const double tau = 10e-6;
        const double dt = 100e-9;
        const double n_noise = 1.0;
        for (double target : {1e2, 1e3, 1e4, 1e5}) {
            const double amp = std::sqrt(target * n_noise / tau);
            std::vector<double> phases;
            phases.reserve(1000);
            for (std::uint64_t r = 0; r < 1000; ++r) {
                NoiseModel noise;
                noise.n_noise = n_noise;
                noise.seed = derive_seed(617, r);
                const auto trace = synthesize_trace(
                    [&](double) { return std::complex<double>(amp, 0.0); }, noise, dt, tau);
                std::complex<double> mean{0.0, 0.0};
                for (const auto& s : trace.samples)
                    mean += s;
                phases.push_back(std::arg(mean));
            }
            const double mean = mean_of(phases);
            double ss = 0.0;
            for (double p : phases)
                ss += (p - mean) * (p - mean);
            const double sd = std::sqrt(ss / static_cast<double>(phases.size() - 1));
            const double ratio = sd * std::sqrt(target);
            c.require(std::abs(ratio - 1.0) <= 0.20,
                      "spread/prediction = " + fmt(ratio) + " at SNR = " + fmt(target));
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        c.require(seconds < 60.0, "runtime " + fmt(seconds) + " s exceeds 60 s");
    });

    criterion(7, "round-trip estimation, noiseless and paper-scale noise", [](Checker& c) {
        ExperimentConfig config = default_config();
        config.scenario = Scenario::time_scan;

        // noiseless round trips for every fit
        {
            auto quiet = config;
            quiet.noise.n_noise = 0.0;
            quiet.noise.drift_rate = 0.0;
            quiet.noise.phase_offset = 0.0;
            quiet.time_scan.time_origin = 0.15e-6;

            const auto computation = detail::simulate_time_scan(quiet);
            TimeFitOptions options;
            const auto fit = fit_time_model(computation.data, detail::model_from_config(quiet),
                                            options);
            const double n_rel = std::abs(fit.params.at("n_atoms") / 3300.0 - 1.0);
            c.require(n_rel <= 0.005,
                      "noiseless time-model N error " + fmt(n_rel) + ", expected <= 0.5%");
            c.require(std::abs(fit.params.at("t0") - 0.15e-6) <= 10e-9,
                      "noiseless t0 error " + fmt(std::abs(fit.params.at("t0") - 0.15e-6)) +
                          " s, expected <= 10 ns");

            // Lorentzian
            std::vector<SpectrumPoint> spectrum;
            for (int i = -20; i <= 20; ++i) {
                const double dp = 0.125 * i * quiet.cavity.kappa;
                const auto resp = complex_transmission(dp, quiet.cavity);
                spectrum.push_back({dp, resp.amplitude_n, resp.phase});
            }
            const auto lor = fit_lorentzian(spectrum);
            c.require(std::abs(lor.params.at("kappa") / quiet.cavity.kappa - 1.0) <= 0.005,
                      "noiseless kappa recovery off");

            // detuning parabola
            std::vector<WeightedPoint> parabola;
            for (double t = 1.7e-6; t <= 6.2e-6 + 1e-12; t += 250e-9)
                parabola.push_back({t, raw_detuning(t, quiet.profile), 0.0});
            const auto par = fit_detuning_parabola(parabola);
            c.require(std::abs(par.params.at("t_min") / quiet.profile.t_min - 1.0) <= 0.005 &&
                          std::abs(par.params.at("curvature") / quiet.profile.curvature - 1.0) <=
                              0.005,
                      "noiseless parabola recovery off");

            // inverse detuning
            const double g1 = angular_from_hz(17.5e3);
            std::vector<InverseDetuningPoint> inverse;
            for (double f = 10.5e6; f <= 20.0e6; f += 0.5e6) {
                const double da = angular_from_hz(f);
                const double chi = collective_shift(g1, 4300.0, -2150.0, da);
                inverse.push_back({da, std::atan(2.0 * chi / quiet.cavity.kappa), 0.0});
            }
            const auto inv = fit_inverse_detuning(inverse, g1, quiet.cavity.kappa);
            c.require(std::abs(inv.params.at("n_atoms") / 4300.0 - 1.0) <= 0.005,
                      "noiseless inverse-detuning recovery off");

            // atom calibration
            std::vector<CalibrationPoint> calib;
            for (int i = 0; i <= 20; ++i) {
                const double n = rabi_population(0.05 * i, 4100.0);
                const double chi =
                    (n > 0.0) ? collective_shift(g1, n, -0.5 * n, angular_from_hz(11.25e6)) : 0.0;
                calib.push_back({n / 4100.0, std::atan(2.0 * chi / quiet.cavity.kappa), 0.0});
            }
            const auto cal =
                fit_atom_calibration(calib, g1, quiet.cavity.kappa, angular_from_hz(11.25e6));
            c.require(std::abs(cal.params.at("n_max") / 4100.0 - 1.0) <= 0.005,
                      "noiseless calibration recovery off");
        }

        // paper-scale noise: k = 5e4 averages, n_noise = 34, n_c = 600
        {
            const auto computation = detail::simulate_time_scan(config);
            TimeFitOptions options;
            const auto fit = fit_time_model(computation.data, detail::model_from_config(config),
                                            options);
            const double n_fit = fit.params.at("n_atoms");
            const double sigma = fit.sigmas.at("n_atoms");
            c.require(std::abs(n_fit - 3300.0) <= 2.0 * sigma,
                      "noisy N = " + fmt(n_fit) + " +- " + fmt(sigma) +
                          " not within 2 sigma of 3300");
            c.require(sigma / n_fit <= 0.06,
                      "sigma_N/N = " + fmt(sigma / n_fit) + ", expected <= 6%");
            c.require(fit.converged, "noisy time-model fit did not converge");
        }
    });

    criterion(8, "scan linearity and the 1/delta_a law", [](Checker& c) {
        const auto cav = paper_cavity();
        const double g1 = angular_from_hz(17.5e3);
        const double delta_a = angular_from_hz(11.25e6);

        // noiseless atom scan: residual from the through-origin line < 0.1% of range
        std::vector<CalibrationPoint> points;
        for (int i = 0; i <= 20; ++i) {
            const double n = rabi_population(0.05 * i, 4100.0);
            const double chi = (n > 0.0) ? collective_shift(g1, n, -0.5 * n, delta_a) : 0.0;
            points.push_back({n / 4100.0, std::atan(2.0 * chi / cav.kappa), 0.0});
        }
        const auto fit = fit_atom_calibration(points, g1, cav.kappa, delta_a);
        const double slope = fit.params.at("slope");
        double max_resid = 0.0, range = 0.0;
        for (const auto& p : points) {
            max_resid = std::max(max_resid, std::abs(p.delta_phase - slope * p.signal));
            range = std::max(range, std::abs(p.delta_phase));
        }
        c.require(max_resid / range < 1e-3,
                  "relative linearity residual " + fmt(max_resid / range) + ", expected < 0.1%");

        // noiseless 1/delta_a law above the cut
        std::vector<InverseDetuningPoint> inverse;
        for (double f = 5.0e6; f <= 20.0e6; f += 0.5e6) {
            const double da = angular_from_hz(f);
            const double chi = collective_shift(g1, 4300.0, -2150.0, da);
            inverse.push_back({da, std::atan(2.0 * chi / cav.kappa), 0.0});
        }
        const auto inv = fit_inverse_detuning(inverse, g1, cav.kappa);
        const double err = std::abs(inv.params.at("n_atoms") / 4300.0 - 1.0);
        c.require(err < 0.005, "N recovery error " + fmt(err) + ", expected < 0.5%");
    });

    criterion(9, "estimator null tests", [](Checker& c) {
        // probe-off amplitude consistent with zero within 3 standard errors
        const AveragingPlan plan{100, 500, 100e-9};
        const AveragingPlan est_plan = block_estimator_plan(plan);
        NoiseModel noise;
        noise.n_noise = 34.0;
        GaussianSampler sampler(40901);
        auto dark = [](double) { return std::complex<double>(0.0, 0.0); };
        const auto sig =
            synthesize_block_record(dark, noise, plan, 0.04, 100e-9, 50, 0.0, sampler);
        const auto ref =
            synthesize_block_record(dark, noise, plan, 0.04, 100e-9, 50, 0.0, sampler);
        const auto cal =
            synthesize_block_record(dark, noise, plan, 0.04, 100e-9, 50, 0.0, sampler);
        const double noise_power = calibrate_noise_power(cal, est_plan);
        const double norm = std::sqrt(600.0 * paper_cavity().kappa_out);
        const auto amp = windowed_amplitude_change(sig, ref, est_plan, noise_power, norm);
        c.require(std::abs(amp.value) <= 3.0 * amp.std_error,
                  "probe-off delta_A = " + fmt(amp.value) + " +- " + fmt(amp.std_error) +
                      " not consistent with 0");

        // injected -0.104 deg offset removed to < 0.005 deg (noiseless)
        const double offset = rad_from_deg(-0.104);
        AveragingPlan small_plan{2, 3, 100e-9};
        IQTrace reference;
        reference.dt = 100e-9;
        reference.samples.assign(small_plan.cycles() * 4, {1.0, 0.0});
        IQTrace shifted = reference;
        for (auto& s : shifted.samples)
            s = std::polar(1.0, offset);
        const auto est = phase_change_estimator(shifted, reference, small_plan, offset);
        for (double v : est.value)
            c.require(std::abs(deg_from_rad(v)) < 0.005,
                      "offset residual " + fmt(deg_from_rad(v)) + " deg");
    });

    std::printf("%d criterion(s) failed\n", g_failures);
    return g_failures;
}
