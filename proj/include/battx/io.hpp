#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "battx/dataset.hpp"
#include "battx/errors.hpp"
#include "battx/fit_types.hpp"
#include "battx/params.hpp"
#include "battx/profile.hpp"
#include "battx/simulate.hpp"

namespace battx::io {

// --- number formatting -------------------------------------------------
// Shortest round-trip representation: files reload bit-exactly and stay
// locale-independent.

inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& path, std::size_t line) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
        throw IoError(path + ":" + std::to_string(line) + ": non-numeric cell '" +
                      std::string(s) + "'");
    return v;
}

// --- generic CSV table --------------------------------------------------

struct CsvTable {
    std::map<std::string, std::string> metadata; // leading "# key=value" lines
    std::vector<std::string> columns;
    std::vector<std::vector<double>> data; // column-major
    std::string path;

    std::optional<std::size_t> find(std::string_view name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        return std::nullopt;
    }

    const std::vector<double>& column(std::string_view name) const {
        auto idx = find(name);
        if (!idx) throw IoError(path + ": missing required column '" + std::string(name) + "'");
        return data[*idx];
    }
};

inline std::vector<std::string_view> split_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    CsvTable table;
    table.path = path;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto body = line.substr(1);
            const auto eq = body.find('=');
            if (eq != std::string::npos) {
                auto trim = [](std::string s) {
                    const auto b = s.find_first_not_of(" \t");
                    const auto e = s.find_last_not_of(" \t");
                    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
                };
                table.metadata[trim(body.substr(0, eq))] = trim(body.substr(eq + 1));
            }
            continue;
        }
        const auto cells = split_line(line);
        if (!have_header) {
            for (auto c : cells) {
                if (c.empty())
                    throw IoError(path + ":" + std::to_string(lineno) + ": malformed header");
                table.columns.emplace_back(c);
            }
            table.data.assign(table.columns.size(), {});
            have_header = true;
            continue;
        }
        if (cells.size() != table.columns.size())
            throw IoError(path + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(table.columns.size()) + " cells, got " +
                          std::to_string(cells.size()));
        for (std::size_t i = 0; i < cells.size(); ++i)
            table.data[i].push_back(parse_double(cells[i], path, lineno));
    }
    if (!have_header) throw IoError(path + ": empty file, no header row");
    return table;
}

inline void check_monotone_time(const std::vector<double>& t, const std::string& path) {
    for (std::size_t k = 1; k < t.size(); ++k)
        if (!(t[k] > t[k - 1]))
            throw IoError(path + ": time_s column not strictly increasing at row " +
                          std::to_string(k + 1));
}

// --- profiles -------------------------------------------------------------

inline void write_profile(const CurrentProfile& profile, const std::string& path) {
    profile.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "# interpolation="
        << (profile.interpolation == CurrentProfile::Interp::linear ? "linear" : "hold-previous")
        << "\n";
    out << "# t_amb_k=" << format_double(profile.t_amb) << "\n";
    out << "time_s,current_a\n";
    for (const auto& s : profile.samples)
        out << format_double(s.time) << ',' << format_double(s.current) << '\n';
}

inline CurrentProfile load_profile(const std::string& path) {
    const CsvTable table = read_csv(path);
    CurrentProfile p;
    const auto& t = table.column("time_s");
    const auto& i = table.column("current_a");
    check_monotone_time(t, path);
    for (std::size_t k = 0; k < t.size(); ++k) p.samples.push_back({t[k], i[k]});
    if (auto it = table.metadata.find("interpolation"); it != table.metadata.end())
        p.interpolation = it->second == "linear" ? CurrentProfile::Interp::linear
                                                 : CurrentProfile::Interp::hold_previous;
    if (auto it = table.metadata.find("t_amb_k"); it != table.metadata.end())
        p.t_amb = parse_double(it->second, path, 0);
    p.validate();
    return p;
}

// --- traces and datasets ----------------------------------------------

inline void write_trace(const SimulationTrace& trace, const std::string& path,
                        double t_amb = 298.15, double soc0 = 1.0, double capacity_ah = 0.0) {
    if (trace.rows.empty()) throw IoError("write_trace: empty trace");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "# termination=" << to_string(trace.termination) << "\n";
    out << "# t_amb_k=" << format_double(t_amb) << "\n";
    out << "# soc0=" << format_double(soc0) << "\n";
    if (capacity_ah > 0.0) out << "# capacity_ah=" << format_double(capacity_ah) << "\n";
    const std::size_t n = trace.rows.front().state.v_s.size();
    out << "time_s,current_a,voltage_v,temp_surf_k,soc,heat_w,temp_core_k";
    for (std::size_t i = 0; i < n; ++i) out << ",v_s_" << (i + 1);
    for (std::size_t i = 0; i < 3; ++i) out << ",v_e_" << (i + 1);
    out << "\n";
    for (const auto& r : trace.rows) {
        out << format_double(r.time) << ',' << format_double(r.current) << ','
            << format_double(r.voltage) << ',' << format_double(r.state.t_surf) << ','
            << format_double(r.soc) << ',' << format_double(r.heat) << ','
            << format_double(r.state.t_core);
        for (double v : r.state.v_s) out << ',' << format_double(v);
        for (double v : r.state.v_e) out << ',' << format_double(v);
        out << '\n';
    }
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    if (ds.capacity_ah > 0.0) out << "# capacity_ah=" << format_double(ds.capacity_ah) << "\n";
    out << "# t_amb_k=" << format_double(ds.t_amb) << "\n";
    out << "# soc0=" << format_double(ds.soc0) << "\n";
    if (!ds.termination.empty()) out << "# termination=" << ds.termination << "\n";
    out << "time_s,current_a,voltage_v";
    if (ds.has_temperature()) out << ",temp_surf_k";
    out << "\n";
    for (std::size_t k = 0; k < ds.size(); ++k) {
        out << format_double(ds.time[k]) << ',' << format_double(ds.current[k]) << ','
            << format_double(ds.voltage[k]);
        if (ds.has_temperature()) out << ',' << format_double(ds.temp_surf[k]);
        out << '\n';
    }
}

/// Reads any trace/dataset CSV; picks time_s, current_a, voltage_v and the
/// optional temp_surf_k by name and ignores extra columns.
inline Dataset load_dataset(const std::string& path) {
    const CsvTable table = read_csv(path);
    Dataset ds;
    ds.time = table.column("time_s");
    ds.current = table.column("current_a");
    ds.voltage = table.column("voltage_v");
    if (table.find("temp_surf_k")) ds.temp_surf = table.column("temp_surf_k");
    check_monotone_time(ds.time, path);
    auto meta = [&](const char* key) -> std::optional<double> {
        auto it = table.metadata.find(key);
        if (it == table.metadata.end()) return std::nullopt;
        return parse_double(it->second, path, 0);
    };
    if (auto v = meta("capacity_ah")) ds.capacity_ah = *v;
    if (auto v = meta("t_amb_k")) ds.t_amb = *v;
    if (auto v = meta("soc0")) ds.soc0 = *v;
    if (auto it = table.metadata.find("termination"); it != table.metadata.end())
        ds.termination = it->second;
    ds.validate();
    return ds;
}

// --- parameter files -----------------------------------------------------

inline nlohmann::json params_to_json(const ModelParams& p) {
    nlohmann::json j;
    j["n_solid_nodes"] = p.n_solid_nodes;
    j["c_s1"] = p.c_s1;
    j["r_s1"] = p.r_s1;
    j["eta"] = p.eta;
    j["sigma"] = p.sigma;
    j["c_e"] = p.c_e;
    j["r_e"] = p.r_e;
    j["alpha"] = p.alpha;
    j["beta1"] = p.beta1;
    j["beta2"] = p.beta2;
    j["gamma1"] = p.gamma1;
    j["gamma2"] = p.gamma2;
    j["gamma3"] = p.gamma3;
    j["kappa1"] = p.kappa1;
    j["kappa2"] = p.kappa2;
    j["c_core"] = p.c_core;
    j["r_core"] = p.r_core;
    j["c_surf"] = p.c_surf;
    j["r_surf"] = p.r_surf;
    j["t_ref"] = p.t_ref;
    j["v_cut_low"] = p.v_cut_low;
    j["v_cut_high"] = p.v_cut_high;
    return j;
}

inline void write_params(const ModelParams& p, const std::string& path,
                         const std::vector<std::string>& identified_steps = {}) {
    p.validate();
    nlohmann::json j = params_to_json(p);
    if (!identified_steps.empty()) j["identified_steps"] = identified_steps;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

inline ModelParams load_params(const std::string& path,
                               std::vector<std::string>* identified_steps = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("parameter file not found: '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
    ModelParams p;
    auto get = [&](const char* key, auto& field) {
        if (!j.contains(key)) throw IoError(path + ": missing key '" + key + "'");
        try {
            field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
        } catch (const nlohmann::json::exception&) {
            throw IoError(path + ": invalid value for key '" + std::string(key) + "'");
        }
    };
    get("n_solid_nodes", p.n_solid_nodes);
    get("c_s1", p.c_s1);
    get("r_s1", p.r_s1);
    get("eta", p.eta);
    get("sigma", p.sigma);
    get("c_e", p.c_e);
    get("r_e", p.r_e);
    get("alpha", p.alpha);
    get("beta1", p.beta1);
    get("beta2", p.beta2);
    get("gamma1", p.gamma1);
    get("gamma2", p.gamma2);
    get("gamma3", p.gamma3);
    get("kappa1", p.kappa1);
    get("kappa2", p.kappa2);
    get("c_core", p.c_core);
    get("r_core", p.r_core);
    get("c_surf", p.c_surf);
    get("r_surf", p.r_surf);
    get("t_ref", p.t_ref);
    get("v_cut_low", p.v_cut_low);
    get("v_cut_high", p.v_cut_high);
    static const std::vector<std::string> known = {
        "n_solid_nodes", "c_s1", "r_s1", "eta", "sigma", "c_e", "r_e", "alpha",
        "beta1", "beta2", "gamma1", "gamma2", "gamma3", "kappa1", "kappa2",
        "c_core", "r_core", "c_surf", "r_surf", "t_ref", "v_cut_low", "v_cut_high",
        "identified_steps"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw IoError(path + ": unknown key '" + it.key() + "'");
    if (identified_steps) {
        identified_steps->clear();
        if (j.contains("identified_steps"))
            *identified_steps = j.at("identified_steps").get<std::vector<std::string>>();
    }
    try {
        p.validate();
    } catch (const DomainError& e) {
        throw IoError(path + ": " + e.what());
    }
    return p;
}

// --- bounds files ----------------------------------------------------------

inline void write_bounds(const ParamBounds& b, const std::string& path) {
    b.validate();
    nlohmann::json j;
    for (const auto& [name, t] : b.scalars)
        j[name] = {{"lower", t.lower}, {"init", t.init}, {"upper", t.upper}};
    nlohmann::json a;
    a["lower"] = nlohmann::json::array();
    a["init"] = nlohmann::json::array();
    a["upper"] = nlohmann::json::array();
    for (const auto& t : b.alpha) {
        a["lower"].push_back(t.lower);
        a["init"].push_back(t.init);
        a["upper"].push_back(t.upper);
    }
    j["alpha"] = a;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

inline ParamBounds load_bounds(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("bounds file not found: '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
    ParamBounds b;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "alpha") {
            const auto lo = it.value().at("lower").get<std::vector<double>>();
            const auto ini = it.value().at("init").get<std::vector<double>>();
            const auto hi = it.value().at("upper").get<std::vector<double>>();
            if (lo.size() != 17 || ini.size() != 17 || hi.size() != 17)
                throw IoError(path + ": alpha bounds must have 17 entries");
            for (std::size_t i = 0; i < 17; ++i) b.alpha[i] = {lo[i], ini[i], hi[i]};
        } else {
            b.scalars[it.key()] = {it.value().at("lower").get<double>(),
                                   it.value().at("init").get<double>(),
                                   it.value().at("upper").get<double>()};
        }
    }
    try {
        b.validate();
    } catch (const DomainError& e) {
        throw IoError(path + ": " + e.what());
    }
    return b;
}

// --- fit results ------------------------------------------------------------

inline nlohmann::json fit_result_to_json(const FitResult& r) {
    nlohmann::json j;
    j["estimates"] = r.estimates;
    j["residual_rms"] = r.residual_rms;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    j["active_bounds"] = r.active_bounds;
    j["warnings"] = r.warnings;
    j["seed"] = r.seed;
    j["multi_start"] = {{"starts", r.multi_start.starts},
                        {"best_start", r.multi_start.best_start},
                        {"start_costs", r.multi_start.start_costs}};
    return j;
}

inline void write_fit_result(const FitResult& r, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << fit_result_to_json(r).dump(2) << "\n";
}

// --- drive-cycle template ---------------------------------------------------

inline std::vector<UddsTemplatePoint> load_udds_template(const std::string& path) {
    const CsvTable table = read_csv(path);
    const auto& t = table.column("time_s");
    const auto& x = table.column("load");
    check_monotone_time(t, path);
    std::vector<UddsTemplatePoint> out;
    out.reserve(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) out.push_back({t[k], x[k]});
    return out;
}

} // namespace battx::io
