// rydsim: simulate dispersive readout of an atom ensemble in a microwave
// cavity, fit the resulting records, and forecast measurement precision.
//
// Verbs:
//   simulate  run the configured scenario end to end (synthesis + fits)
//   sweep     same, restricted to the grid scenarios
//   fit       run the scenario's fit on an existing CSV data file
//   forecast  print the optimal-measurement forecast
//
// Exit codes: 0 success, 2 config error, 3 fit non-convergence, 4 numeric
// domain error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "rydsim/config.hpp"
#include "rydsim/io.hpp"
#include "rydsim/scenarios.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_fit = 3;
constexpr int exit_domain = 4;

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string scenario;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("-c,--config", args.config_path, "JSON config file (defaults used if omitted)");
    sub->add_option("-o,--out", args.out_dir, "output directory (overrides config)");
    sub->add_option("-s,--scenario", args.scenario,
                    "scenario override: spectrum|time_scan|freq_scan|detuning_scan|"
                    "atom_scan|power_scan|forecast");
    sub->add_option("--seed", args.seed, "master seed override")
        ->each([&args](const std::string&) { args.seed_set = true; });
}

rydsim::ExperimentConfig build_config(const CommonArgs& args) {
    rydsim::ExperimentConfig config = args.config_path.empty()
                                          ? rydsim::default_config()
                                          : rydsim::load_config(args.config_path);
    if (!args.scenario.empty())
        config.scenario = rydsim::scenario_from_string(args.scenario);
    if (args.seed_set)
        config.master_seed = args.seed;
    if (!args.out_dir.empty())
        config.out_dir = args.out_dir;
    return config;
}

int run_fit_verb(const rydsim::ExperimentConfig& config, const std::string& data_path) {
    using namespace rydsim;
    const std::filesystem::path out_dir = config.out_dir;
    std::filesystem::create_directories(out_dir);

    FitResult fit;
    nlohmann::json report;
    switch (config.scenario) {
    case Scenario::spectrum: {
        const Table table = read_table(data_path);
        const auto cd = table.column_index("delta_p_hz");
        const auto ca = table.column_index("amplitude_n");
        const auto cp = table.column_index("phase_deg");
        std::vector<SpectrumPoint> points;
        for (const auto& row : table.rows)
            points.push_back({angular_from_hz(row[cd]), row[ca], rad_from_deg(row[cp])});
        fit = fit_lorentzian(points);
        report["kappa_hz"] = hz_from_angular(fit.params.at("kappa"));
        report["kappa_sigma_hz"] = hz_from_angular(fit.sigmas.at("kappa"));
        report["omega_c_offset_hz"] = hz_from_angular(fit.params.at("omega_c_offset"));
        break;
    }
    case Scenario::time_scan: {
        const TimeScanData data = read_time_scan_csv(data_path);
        TimeFitOptions options;
        options.t0_guess = config.time_scan.fit_t0_guess;
        fit = fit_time_model(data, detail::model_from_config(config), options);
        report["n_atoms"] = fit.params.at("n_atoms");
        report["n_atoms_sigma"] = fit.sigmas.at("n_atoms");
        report["t0_s"] = fit.params.at("t0");
        break;
    }
    case Scenario::detuning_scan: {
        const Table table = read_table(data_path);
        const auto cd = table.column_index("delta_a_hz");
        const auto cp = table.column_index("delta_phase_deg");
        const auto cs = table.column_index("delta_phase_sigma_deg");
        std::vector<InverseDetuningPoint> points;
        for (const auto& row : table.rows)
            points.push_back({angular_from_hz(row[cd]), rad_from_deg(row[cp]),
                              rad_from_deg(row[cs])});
        fit = fit_inverse_detuning(points, detail::window_coupling(config),
                                   config.cavity.kappa, config.time_scan.delta_a_crit);
        report["n_atoms"] = fit.params.at("n_atoms");
        report["n_atoms_sigma"] = fit.sigmas.at("n_atoms");
        break;
    }
    case Scenario::atom_scan: {
        const Table table = read_table(data_path);
        const auto cs = table.column_index("signal_vns");
        const auto cp = table.column_index("delta_phase_deg");
        const auto ce = table.column_index("delta_phase_sigma_deg");
        std::vector<CalibrationPoint> points;
        for (const auto& row : table.rows)
            points.push_back({row[cs], rad_from_deg(row[cp]), rad_from_deg(row[ce])});
        fit = fit_atom_calibration(points, detail::window_coupling(config),
                                   config.cavity.kappa, config.atom_scan.delta_a);
        report["n_max"] = fit.params.at("n_max");
        report["n_max_sigma"] = fit.sigmas.at("n_max");
        break;
    }
    default:
        throw ConfigError("no fit defined for scenario " + to_string(config.scenario));
    }
    report["residual_norm"] = fit.residual_norm;
    report["converged"] = fit.converged;
    write_json(report, out_dir / "fit_report.json");
    std::printf("%s\n", report.dump(2).c_str());
    return fit.converged ? exit_ok : exit_fit;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dispersive-readout simulator and estimation toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string data_path;

    auto* simulate = app.add_subcommand("simulate", "run the configured scenario end to end");
    add_common(simulate, args);
    auto* sweep = app.add_subcommand("sweep", "run a sweep-grid scenario");
    add_common(sweep, args);
    auto* fit = app.add_subcommand("fit", "fit an existing CSV data file");
    add_common(fit, args);
    fit->add_option("-d,--data", data_path, "input CSV produced by simulate/sweep")->required();
    auto* forecast_cmd = app.add_subcommand("forecast", "optimal-measurement forecast");
    add_common(forecast_cmd, args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? exit_ok : exit_config;
    }

    try {
        rydsim::ExperimentConfig config = build_config(args);

        if (forecast_cmd->parsed())
            config.scenario = rydsim::Scenario::forecast;
        if (sweep->parsed()) {
            switch (config.scenario) {
            case rydsim::Scenario::time_scan:
            case rydsim::Scenario::freq_scan:
            case rydsim::Scenario::detuning_scan:
            case rydsim::Scenario::atom_scan:
            case rydsim::Scenario::power_scan:
                break;
            default:
                throw rydsim::ConfigError("sweep requires a grid scenario, got " +
                                          rydsim::to_string(config.scenario));
            }
        }
        if (fit->parsed())
            return run_fit_verb(config, data_path);

        const auto result = rydsim::run_scenario(config, config.out_dir);
        for (const auto& name : result.artifacts)
            std::printf("wrote %s\n", (std::filesystem::path(config.out_dir) / name).c_str());
        if (!result.fit_converged) {
            std::fprintf(stderr, "fit did not converge\n");
            return exit_fit;
        }
        return exit_ok;
    } catch (const rydsim::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return exit_config;
    } catch (const rydsim::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return exit_config;
    } catch (const rydsim::FitError& e) {
        std::fprintf(stderr, "fit error: %s\n", e.what());
        return exit_fit;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "domain error: %s\n", e.what());
        return exit_domain;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "domain error: %s\n", e.what());
        return exit_domain;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_domain;
    }
}
