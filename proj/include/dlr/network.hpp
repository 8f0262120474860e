#pragma once

// =============================================================================
// Grid data model and ingestion
// =============================================================================
// A NetworkCase holds buses, branches, generators, per-period demand and
// per-line weather, all in per-unit on a common MVA base. Cases are loaded
// from a single JSON document; weather may alternatively come from a CSV
// sidecar. Loaded cases are immutable and safe to share across workers.
// =============================================================================

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlr/thermal.hpp"

namespace dlr::net {

using json = nlohmann::json;

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingThermalData : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Entities
// ---------------------------------------------------------------------------

struct Bus {
    std::string id;
    double shunt_g = 0.0;  ///< p.u.
    double shunt_b = 0.0;  ///< p.u.
    double v_min = 0.9;    ///< p.u.
    double v_max = 1.1;    ///< p.u.
};

/// Per-line thermal data; present iff the branch is a thermal line.
struct BranchThermal {
    thermal::ConductorParams conductor;
    double base_kv = 0.0;        ///< line-to-line voltage base for the unit bridge
    double initial_temp = 0.0;   ///< K, temperature at the start of the horizon
};

struct Branch {
    std::string id;
    int from = -1;  ///< bus index
    int to = -1;    ///< bus index
    double r = 0.0;  ///< series resistance, p.u.
    double x = 0.0;  ///< series reactance, p.u.
    double g = 0.0;  ///< derived series conductance, p.u.
    double b = 0.0;  ///< derived series susceptance, p.u.
    double angle_min = -M_PI / 3;  ///< rad
    double angle_max = M_PI / 3;   ///< rad
    std::optional<BranchThermal> thermal;
    std::optional<double> static_current_cap;  ///< p.u.^2, for non-thermal branches

    bool is_thermal_line() const { return thermal.has_value(); }
    bool has_current_model() const {
        return thermal.has_value() || static_current_cap.has_value();
    }
};

struct Generator {
    std::string id;
    int bus = -1;
    double c2 = 0.0;  ///< $/MW^2 h
    double c1 = 0.0;  ///< $/MWh
    double c0 = 0.0;  ///< $/h
    double p_min = 0.0, p_max = 0.0;  ///< p.u.
    double q_min = 0.0, q_max = 0.0;  ///< p.u.
    double ramp_up = 0.0, ramp_down = 0.0;  ///< p.u. per interval
    bool renewable = false;
};

struct NetworkCase {
    double base_mva = 100.0;
    double dt_seconds = 300.0;
    int horizon = 1;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;
    std::vector<std::vector<double>> demand_p;  ///< [bus][period], p.u.
    std::vector<std::vector<double>> demand_q;  ///< [bus][period], p.u.
    std::vector<std::vector<thermal::WeatherSample>> weather;  ///< [branch][period]; empty rows for non-thermal

    int bus_index(const std::string& id) const {
        for (std::size_t i = 0; i < buses.size(); ++i)
            if (buses[i].id == id) return int(i);
        return -1;
    }
    int branch_index(const std::string& id) const {
        for (std::size_t i = 0; i < branches.size(); ++i)
            if (branches[i].id == id) return int(i);
        return -1;
    }

    /// Line current base in amperes: S_base / (sqrt(3) * V_base).
    double base_current_amps(const Branch& br) const {
        if (!br.thermal) {
            throw MissingThermalData("branch " + br.id + " has no thermal data");
        }
        return base_mva * 1e6 / (std::sqrt(3.0) * br.thermal->base_kv * 1e3);
    }

    /// p.u.^2 squared current -> A^2.
    double to_physical_current_sq(double iota_pu, const Branch& br) const {
        const double ib = base_current_amps(br);
        return iota_pu * ib * ib;
    }

    /// A^2 -> p.u.^2.
    double to_pu_current_sq(double iota_a2, const Branch& br) const {
        const double ib = base_current_amps(br);
        return iota_a2 / (ib * ib);
    }

    /// p.u.^2 -> (kA)^2, the unit used for current consensus coordinates.
    double to_ka2_current_sq(double iota_pu, const Branch& br) const {
        return to_physical_current_sq(iota_pu, br) * 1e-6;
    }
};

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

namespace detail {

inline double require_number(const json& j, const std::string& key,
                             const std::string& where) {
    if (!j.contains(key) || !j[key].is_number()) {
        throw SchemaError(where + ": missing or non-numeric field '" + key + "'");
    }
    return j[key].get<double>();
}

inline std::string require_string(const json& j, const std::string& key,
                                  const std::string& where) {
    if (!j.contains(key) || !j[key].is_string()) {
        throw SchemaError(where + ": missing or non-string field '" + key + "'");
    }
    return j[key].get<std::string>();
}

inline thermal::WeatherSample weather_from_fields(double wind, double angle,
                                                  double ambient, double solar_wpm,
                                                  double absorptivity,
                                                  const std::string& where) {
    if (wind < 0.0) throw ValidationError(where + ": wind_mps must be >= 0");
    if (!(ambient > 0.0)) throw ValidationError(where + ": ambient_K must be > 0");
    if (solar_wpm < 0.0) throw ValidationError(where + ": solar_wpm must be >= 0");
    if (angle < 0.0 || angle > M_PI / 2 + 1e-12) {
        throw ValidationError(where + ": angle_rad must lie in [0, pi/2]");
    }
    thermal::WeatherSample w;
    w.wind_speed = wind;
    w.wind_angle = angle;
    w.ambient_temp = ambient;
    // solar_wpm in the case file is incident irradiance per unit length;
    // the sample stores the absorbed power.
    w.solar_gain = absorptivity * solar_wpm;
    return w;
}

}  // namespace detail

/// Parse a case from a JSON value. Throws SchemaError for malformed input and
/// ValidationError for violated invariants; messages name the offending entity.
inline NetworkCase parse_case(const json& doc) {
    NetworkCase nc;
    if (doc.contains("schema_version") &&
        doc["schema_version"].get<int>() != kSchemaVersion) {
        throw SchemaError("unsupported schema_version");
    }
    nc.base_mva = detail::require_number(doc, "base_mva", "case");
    nc.dt_seconds = detail::require_number(doc, "dt_seconds", "case");
    nc.horizon = int(detail::require_number(doc, "horizon", "case"));
    if (!(nc.base_mva > 0)) throw ValidationError("case: base_mva must be positive");
    if (!(nc.dt_seconds > 0)) throw ValidationError("case: dt_seconds must be positive");
    if (nc.horizon < 1) throw ValidationError("case: horizon must be >= 1");

    if (!doc.contains("buses") || !doc["buses"].is_array() || doc["buses"].empty()) {
        throw SchemaError("case: 'buses' must be a non-empty array");
    }
    for (const auto& jb : doc["buses"]) {
        Bus b;
        b.id = detail::require_string(jb, "id", "bus");
        const std::string where = "bus " + b.id;
        b.shunt_g = jb.value("shunt_g", 0.0);
        b.shunt_b = jb.value("shunt_b", 0.0);
        b.v_min = detail::require_number(jb, "v_min", where);
        b.v_max = detail::require_number(jb, "v_max", where);
        if (!(b.v_min > 0.0 && b.v_min <= b.v_max)) {
            throw ValidationError(where + ": requires 0 < v_min <= v_max");
        }
        if (nc.bus_index(b.id) >= 0) throw ValidationError(where + ": duplicate id");
        nc.buses.push_back(b);
    }

    if (!doc.contains("branches") || !doc["branches"].is_array()) {
        throw SchemaError("case: 'branches' must be an array");
    }
    for (const auto& jb : doc["branches"]) {
        Branch br;
        br.id = detail::require_string(jb, "id", "branch");
        const std::string where = "branch " + br.id;
        br.from = nc.bus_index(detail::require_string(jb, "from", where));
        br.to = nc.bus_index(detail::require_string(jb, "to", where));
        if (br.from < 0 || br.to < 0) throw ValidationError(where + ": unknown endpoint bus");
        if (br.from == br.to) throw ValidationError(where + ": from == to");
        br.r = detail::require_number(jb, "r", where);
        br.x = detail::require_number(jb, "x", where);
        const double z2 = br.r * br.r + br.x * br.x;
        if (!(z2 > 0)) throw ValidationError(where + ": zero series impedance");
        br.g = br.r / z2;
        br.b = -br.x / z2;
        br.angle_min = jb.value("angle_min_rad", -M_PI / 3);
        br.angle_max = jb.value("angle_max_rad", M_PI / 3);
        if (!(br.angle_min <= 0.0 && 0.0 <= br.angle_max)) {
            throw ValidationError(where + ": angle limits must straddle 0");
        }
        if (std::abs(br.angle_min) >= M_PI / 2 || std::abs(br.angle_max) >= M_PI / 2) {
            throw ValidationError(where + ": |angle limits| must be < pi/2");
        }
        if (jb.contains("thermal")) {
            const auto& jt = jb["thermal"];
            BranchThermal th;
            th.conductor.resistance_per_m =
                detail::require_number(jt, "r_ohm_per_m", where);
            th.conductor.mass_per_m = detail::require_number(jt, "mass_kg_per_m", where);
            th.conductor.specific_heat =
                detail::require_number(jt, "cp_j_per_kg_k", where);
            th.conductor.diameter = detail::require_number(jt, "diameter_m", where);
            th.conductor.emissivity = detail::require_number(jt, "emissivity", where);
            th.conductor.absorptivity = detail::require_number(jt, "absorptivity", where);
            th.conductor.max_temperature = detail::require_number(jt, "t_max_k", where);
            th.base_kv = detail::require_number(jt, "base_kv", where);
            th.initial_temp = detail::require_number(jt, "initial_temp_k", where);
            try {
                th.conductor.validate();
            } catch (const thermal::ThermalError& e) {
                throw ValidationError(where + ": " + e.what());
            }
            if (!(th.base_kv > 0)) throw ValidationError(where + ": base_kv must be positive");
            if (!(th.initial_temp > 0 &&
                  th.initial_temp <= th.conductor.max_temperature)) {
                throw ValidationError(where +
                                      ": initial_temp_k must lie in (0, t_max_k]");
            }
            br.thermal = th;
        }
        if (jb.contains("current_cap_pu2")) {
            const double cap = jb["current_cap_pu2"].get<double>();
            if (!(cap > 0)) throw ValidationError(where + ": current_cap_pu2 must be positive");
            br.static_current_cap = cap;
        }
        if (nc.branch_index(br.id) >= 0) throw ValidationError(where + ": duplicate id");
        nc.branches.push_back(br);
    }

    if (!doc.contains("generators") || !doc["generators"].is_array() ||
        doc["generators"].empty()) {
        throw SchemaError("case: 'generators' must be a non-empty array");
    }
    for (const auto& jg : doc["generators"]) {
        Generator g;
        g.id = detail::require_string(jg, "id", "generator");
        const std::string where = "generator " + g.id;
        g.bus = nc.bus_index(detail::require_string(jg, "bus", where));
        if (g.bus < 0) throw ValidationError(where + ": unknown bus");
        g.c2 = jg.value("c2", 0.0);
        g.c1 = jg.value("c1", 0.0);
        g.c0 = jg.value("c0", 0.0);
        if (g.c2 < 0) throw ValidationError(where + ": c2 must be >= 0 (convex cost)");
        g.p_min = detail::require_number(jg, "p_min", where);
        g.p_max = detail::require_number(jg, "p_max", where);
        g.q_min = detail::require_number(jg, "q_min", where);
        g.q_max = detail::require_number(jg, "q_max", where);
        if (g.p_min > g.p_max) throw ValidationError(where + ": p_min > p_max");
        if (g.q_min > g.q_max) throw ValidationError(where + ": q_min > q_max");
        g.ramp_up = jg.value("ramp_up", 1e9);
        g.ramp_down = jg.value("ramp_down", 1e9);
        if (g.ramp_up < 0 || g.ramp_down < 0) {
            throw ValidationError(where + ": ramp rates must be >= 0");
        }
        g.renewable = jg.value("renewable", false);
        nc.generators.push_back(g);
    }

    nc.demand_p.assign(nc.buses.size(), std::vector<double>(nc.horizon, 0.0));
    nc.demand_q.assign(nc.buses.size(), std::vector<double>(nc.horizon, 0.0));
    if (doc.contains("demand")) {
        if (!doc["demand"].is_object()) throw SchemaError("case: 'demand' must be an object");
        for (const auto& [bus_id, series] : doc["demand"].items()) {
            const int bi = nc.bus_index(bus_id);
            if (bi < 0) throw ValidationError("demand: unknown bus " + bus_id);
            if (!series.is_array() || int(series.size()) != nc.horizon) {
                throw ValidationError("demand at bus " + bus_id +
                                      ": series length must equal horizon");
            }
            for (int t = 0; t < nc.horizon; ++t) {
                nc.demand_p[bi][t] = detail::require_number(series[t], "p",
                                                            "demand " + bus_id);
                nc.demand_q[bi][t] = detail::require_number(series[t], "q",
                                                            "demand " + bus_id);
            }
        }
    }

    nc.weather.assign(nc.branches.size(), {});
    if (doc.contains("weather")) {
        if (!doc["weather"].is_object()) throw SchemaError("case: 'weather' must be an object");
        for (const auto& [line_id, series] : doc["weather"].items()) {
            const int li = nc.branch_index(line_id);
            if (li < 0) throw ValidationError("weather: unknown line " + line_id);
            if (!nc.branches[li].thermal) {
                throw ValidationError("weather: branch " + line_id +
                                      " carries weather but no thermal data");
            }
            if (!series.is_array() || int(series.size()) != nc.horizon) {
                throw ValidationError("weather for line " + line_id + ": got " +
                                      std::to_string(series.size()) + " of " +
                                      std::to_string(nc.horizon) + " periods");
            }
            auto& row = nc.weather[li];
            row.reserve(nc.horizon);
            const double alpha = nc.branches[li].thermal->conductor.absorptivity;
            for (int t = 0; t < nc.horizon; ++t) {
                const std::string where =
                    "weather " + line_id + " period " + std::to_string(t);
                row.push_back(detail::weather_from_fields(
                    detail::require_number(series[t], "wind_mps", where),
                    detail::require_number(series[t], "angle_rad", where),
                    detail::require_number(series[t], "ambient_K", where),
                    detail::require_number(series[t], "solar_wpm", where), alpha,
                    where));
            }
        }
    }

    // Every thermal line must have a full weather series.
    for (std::size_t i = 0; i < nc.branches.size(); ++i) {
        if (nc.branches[i].thermal && int(nc.weather[i].size()) != nc.horizon) {
            throw ValidationError("thermal line " + nc.branches[i].id +
                                  ": weather series missing or incomplete (have " +
                                  std::to_string(nc.weather[i].size()) + " of " +
                                  std::to_string(nc.horizon) + " periods)");
        }
    }
    return nc;
}

/// Load the CSV weather sidecar (columns: line_id, period, wind_mps,
/// angle_rad, ambient_K, solar_wpm) into an existing case.
inline void load_weather_csv(NetworkCase& nc, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open weather file " + path);
    for (auto& row : nc.weather) row.clear();
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (line_no == 1 && fields.size() >= 1 && fields[0] == "line_id") continue;
        if (fields.size() != 6) {
            throw SchemaError(path + ":" + std::to_string(line_no) +
                              ": expected 6 columns");
        }
        const int li = nc.branch_index(fields[0]);
        if (li < 0) throw ValidationError(path + ": unknown line " + fields[0]);
        if (!nc.branches[li].thermal) {
            throw ValidationError(path + ": branch " + fields[0] + " is not thermal");
        }
        const int period = std::stoi(fields[1]);
        if (period < 0 || period >= nc.horizon) {
            throw ValidationError(path + ": period " + fields[1] + " out of range");
        }
        auto& row = nc.weather[li];
        if (int(row.size()) != period) {
            throw ValidationError(path + ": periods for line " + fields[0] +
                                  " must appear in order starting at 0");
        }
        row.push_back(detail::weather_from_fields(
            std::stod(fields[2]), std::stod(fields[3]), std::stod(fields[4]),
            std::stod(fields[5]), nc.branches[li].thermal->conductor.absorptivity,
            path + ":" + std::to_string(line_no)));
    }
    for (std::size_t i = 0; i < nc.branches.size(); ++i) {
        if (nc.branches[i].thermal && int(nc.weather[i].size()) != nc.horizon) {
            throw ValidationError("thermal line " + nc.branches[i].id +
                                  ": weather series missing or incomplete");
        }
    }
}

/// Load a case from disk, optionally with a CSV weather sidecar.
inline NetworkCase load_case(const std::string& path,
                             const std::string& weather_csv = "") {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open case file " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw SchemaError("case " + path + ": " + e.what());
    }
    NetworkCase nc = parse_case(doc);
    if (!weather_csv.empty()) load_weather_csv(nc, weather_csv);
    return nc;
}

// ---------------------------------------------------------------------------
// Canonical serialization
// ---------------------------------------------------------------------------

/// Canonical JSON form of a case: keys sorted, floats emitted with shortest
/// round-trip representation. load -> serialize is a fixed point.
inline json case_to_json(const NetworkCase& nc) {
    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["base_mva"] = nc.base_mva;
    doc["dt_seconds"] = nc.dt_seconds;
    doc["horizon"] = nc.horizon;
    doc["buses"] = json::array();
    for (const auto& b : nc.buses) {
        doc["buses"].push_back({{"id", b.id},
                                {"shunt_g", b.shunt_g},
                                {"shunt_b", b.shunt_b},
                                {"v_min", b.v_min},
                                {"v_max", b.v_max}});
    }
    doc["branches"] = json::array();
    for (const auto& br : nc.branches) {
        json jb = {{"id", br.id},
                   {"from", nc.buses[br.from].id},
                   {"to", nc.buses[br.to].id},
                   {"r", br.r},
                   {"x", br.x},
                   {"angle_min_rad", br.angle_min},
                   {"angle_max_rad", br.angle_max}};
        if (br.thermal) {
            jb["thermal"] = {
                {"r_ohm_per_m", br.thermal->conductor.resistance_per_m},
                {"mass_kg_per_m", br.thermal->conductor.mass_per_m},
                {"cp_j_per_kg_k", br.thermal->conductor.specific_heat},
                {"diameter_m", br.thermal->conductor.diameter},
                {"emissivity", br.thermal->conductor.emissivity},
                {"absorptivity", br.thermal->conductor.absorptivity},
                {"t_max_k", br.thermal->conductor.max_temperature},
                {"base_kv", br.thermal->base_kv},
                {"initial_temp_k", br.thermal->initial_temp}};
        }
        if (br.static_current_cap) jb["current_cap_pu2"] = *br.static_current_cap;
        doc["branches"].push_back(jb);
    }
    doc["generators"] = json::array();
    for (const auto& g : nc.generators) {
        doc["generators"].push_back({{"id", g.id},
                                     {"bus", nc.buses[g.bus].id},
                                     {"c2", g.c2},
                                     {"c1", g.c1},
                                     {"c0", g.c0},
                                     {"p_min", g.p_min},
                                     {"p_max", g.p_max},
                                     {"q_min", g.q_min},
                                     {"q_max", g.q_max},
                                     {"ramp_up", g.ramp_up},
                                     {"ramp_down", g.ramp_down},
                                     {"renewable", g.renewable}});
    }
    doc["demand"] = json::object();
    for (std::size_t i = 0; i < nc.buses.size(); ++i) {
        bool any = false;
        for (int t = 0; t < nc.horizon; ++t) {
            if (nc.demand_p[i][t] != 0.0 || nc.demand_q[i][t] != 0.0) any = true;
        }
        if (!any) continue;
        json series = json::array();
        for (int t = 0; t < nc.horizon; ++t) {
            series.push_back({{"p", nc.demand_p[i][t]}, {"q", nc.demand_q[i][t]}});
        }
        doc["demand"][nc.buses[i].id] = series;
    }
    doc["weather"] = json::object();
    for (std::size_t i = 0; i < nc.branches.size(); ++i) {
        if (!nc.branches[i].thermal) continue;
        const double alpha = nc.branches[i].thermal->conductor.absorptivity;
        json series = json::array();
        for (const auto& w : nc.weather[i]) {
            series.push_back({{"wind_mps", w.wind_speed},
                              {"angle_rad", w.wind_angle},
                              {"ambient_K", w.ambient_temp},
                              {"solar_wpm", w.solar_gain / alpha}});
        }
        doc["weather"][nc.branches[i].id] = series;
    }
    return doc;
}

inline std::string serialize_case(const NetworkCase& nc) {
    return case_to_json(nc).dump(2) + "\n";
}

/// Restrict a case to its first `periods` dispatch intervals.
inline NetworkCase truncate_horizon(NetworkCase nc, int periods) {
    if (periods < 1 || periods > nc.horizon) {
        throw ValidationError("horizon override must lie in [1, case horizon]");
    }
    nc.horizon = periods;
    for (auto& row : nc.demand_p) row.resize(periods);
    for (auto& row : nc.demand_q) row.resize(periods);
    for (auto& row : nc.weather) {
        if (!row.empty()) row.resize(periods);
    }
    return nc;
}

}  // namespace dlr::net
