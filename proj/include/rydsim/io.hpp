#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rydsim/detection.hpp"
#include "rydsim/fits.hpp"

// CSV and JSON I/O. Doubles are printed with 17 significant digits, which
// round-trips bit-exactly through strtod; nlohmann::json does the same for
// the sidecar files, so serialized traces reload identical to the original.

namespace rydsim {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::size_t column_index(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name)
                return i;
        throw IoError("Table: missing column " + name);
    }
};

inline void write_table(const std::filesystem::path& path, const Table& table) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open for writing: " + path.string());
    for (std::size_t i = 0; i < table.columns.size(); ++i)
        out << (i ? "," : "") << table.columns[i];
    out << "\n";
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << (i ? "," : "") << format_double(row[i]);
        out << "\n";
    }
    if (!out)
        throw IoError("write failed: " + path.string());
}

inline Table read_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open for reading: " + path.string());
    Table table;
    std::string line;
    if (!std::getline(in, line))
        throw IoError("empty csv: " + path.string());
    std::stringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ','))
        table.columns.push_back(cell);
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<double> row;
        std::stringstream ss(line);
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str())
                throw IoError("bad number '" + cell + "' in " + path.string());
            row.push_back(v);
        }
        if (row.size() != table.columns.size())
            throw IoError("ragged row in " + path.string());
        table.rows.push_back(std::move(row));
    }
    return table;
}

inline nlohmann::json to_json(const NoiseModel& noise) {
    return {{"n_noise", noise.n_noise},
            {"psd_w_per_hz", noise.psd},
            {"gain", noise.gain},
            {"drift_rate_rad_per_s", noise.drift_rate},
            {"phase_offset_rad", noise.phase_offset},
            {"seed", noise.seed}};
}

inline NoiseModel noise_from_json(const nlohmann::json& j) {
    NoiseModel noise;
    noise.n_noise = j.value("n_noise", 0.0);
    noise.psd = j.value("psd_w_per_hz", 0.0);
    noise.gain = j.value("gain", 0.0);
    noise.drift_rate = j.value("drift_rate_rad_per_s", 0.0);
    noise.phase_offset = j.value("phase_offset_rad", 0.0);
    noise.seed = j.value("seed", std::uint64_t{0});
    return noise;
}

/// Trace CSV: columns t_s, i_flux, q_flux. Trace metadata and the noise model
/// that produced it go to the JSON sidecar.
inline void write_iq_trace(const IQTrace& trace, const std::filesystem::path& csv_path) {
    Table table;
    table.columns = {"t_s", "i_flux", "q_flux"};
    table.rows.reserve(trace.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const double t = trace.t0 + static_cast<double>(i) * trace.dt;
        table.rows.push_back({t, trace.samples[i].real(), trace.samples[i].imag()});
    }
    write_table(csv_path, table);
}

inline void write_iq_sidecar(const IQTrace& trace, const NoiseModel& noise,
                             const std::filesystem::path& json_path) {
    nlohmann::json j;
    j["dt_s"] = trace.dt;
    j["t0_s"] = trace.t0;
    j["n_samples"] = trace.size();
    j["noise"] = to_json(noise);
    std::ofstream out(json_path);
    if (!out)
        throw IoError("cannot open for writing: " + json_path.string());
    out << j.dump(2) << "\n";
}

inline std::pair<IQTrace, NoiseModel> read_iq_trace(const std::filesystem::path& csv_path,
                                                    const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in)
        throw IoError("cannot open for reading: " + json_path.string());
    nlohmann::json j;
    in >> j;

    IQTrace trace;
    trace.dt = j.at("dt_s").get<double>();
    trace.t0 = j.at("t0_s").get<double>();
    const NoiseModel noise = noise_from_json(j.at("noise"));

    const Table table = read_table(csv_path);
    const std::size_t ci = table.column_index("i_flux");
    const std::size_t cq = table.column_index("q_flux");
    trace.samples.reserve(table.rows.size());
    for (const auto& row : table.rows)
        trace.samples.emplace_back(row[ci], row[cq]);
    trace.validate();
    return {trace, noise};
}

inline nlohmann::json to_json(const FitResult& fit) {
    nlohmann::json j;
    j["params"] = fit.params;
    j["sigmas"] = fit.sigmas;
    j["residual_norm"] = fit.residual_norm;
    j["converged"] = fit.converged;
    j["n_eval"] = fit.n_eval;
    return j;
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
    if (!out)
        throw IoError("write failed: " + path.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open for reading: " + path.string());
    nlohmann::json j;
    in >> j;
    return j;
}

} // namespace rydsim
