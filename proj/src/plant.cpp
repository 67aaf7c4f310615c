#include "hev/plant.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hev/error.hpp"

namespace hev {

namespace {

void require(bool ok, ErrorKind kind, const std::string& what) {
    if (!ok) throw Error(kind, what);
}

bool strictly_increasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1])) return false;
    return true;
}

// Index of the lower cell corner and the fractional position in that cell,
// after clamping x to the grid.
std::pair<std::size_t, double> locate(const std::vector<double>& grid, double x) {
    if (grid.size() == 1) return {0, 0.0};
    if (x <= grid.front()) return {0, 0.0};
    if (x >= grid.back()) return {grid.size() - 2, 1.0};
    auto it = std::upper_bound(grid.begin(), grid.end(), x);
    std::size_t hi = static_cast<std::size_t>(it - grid.begin());
    std::size_t lo = hi - 1;
    return {lo, (x - grid[lo]) / (grid[hi] - grid[lo])};
}

}  // namespace

void PlantParameters::validate() const {
    const double positives[] = {mass, gravity, rolling_coeff, air_density, frontal_area, drag_coeff,
                                wheel_radius, gear_ratio_mg1, final_ratio_mg2, t_mot1_max, t_mot2_max,
                                t_eng_max, p_mot2_max, p_batt_charge_max, fuel_heat_value, batt_ocv,
                                batt_resistance, batt_capacity, dt, n_idle, n_eng_max};
    for (double x : positives)
        require(x > 0.0 && std::isfinite(x), ErrorKind::Config, "plant parameters must be strictly positive");
    require(0.0 <= soc_min && soc_min < soc_max && soc_max <= 1.0, ErrorKind::Config,
            "soc bounds must satisfy 0 <= soc_min < soc_max <= 1");
    require(n_series_low >= n_idle && n_series_high >= n_series_low && n_series_high <= n_eng_max,
            ErrorKind::Config, "series speed schedule must lie within [n_idle, n_eng_max]");
}

double PlantParameters::locked_engine_speed(double v) const {
    return v / wheel_radius * gear_ratio_mg1 / kRpmToRadPerSec;
}

double PlantParameters::mg2_speed(double v) const {
    return v / wheel_radius * final_ratio_mg2 / kRpmToRadPerSec;
}

double PlantParameters::series_engine_speed(double generator_torque) const {
    const double load = std::clamp(generator_torque / t_mot1_max, 0.0, 1.0);
    return n_series_low + load * (n_series_high - n_series_low);
}

PlantParameters plant_parameters_from_json(const nlohmann::json& j) {
    PlantParameters p;
    auto get = [&](const char* key, double& field) {
        if (j.contains(key)) field = j.at(key).get<double>();
    };
    get("mass_kg", p.mass);
    get("gravity_m_per_s2", p.gravity);
    get("rolling_coeff", p.rolling_coeff);
    get("air_density_kg_per_m3", p.air_density);
    get("frontal_area_m2", p.frontal_area);
    get("drag_coeff", p.drag_coeff);
    get("wheel_radius_m", p.wheel_radius);
    get("gear_ratio_mg1", p.gear_ratio_mg1);
    get("final_ratio_mg2", p.final_ratio_mg2);
    get("t_mot1_max_nm", p.t_mot1_max);
    get("t_mot2_max_nm", p.t_mot2_max);
    get("t_eng_max_nm", p.t_eng_max);
    get("p_mot2_max_w", p.p_mot2_max);
    get("p_batt_charge_max_w", p.p_batt_charge_max);
    get("fuel_heat_value_kj_per_g", p.fuel_heat_value);
    get("batt_ocv_v", p.batt_ocv);
    get("batt_resistance_ohm", p.batt_resistance);
    get("batt_capacity_ah", p.batt_capacity);
    get("soc_min", p.soc_min);
    get("soc_max", p.soc_max);
    get("dt_s", p.dt);
    get("n_idle_rpm", p.n_idle);
    get("n_eng_max_rpm", p.n_eng_max);
    get("n_series_low_rpm", p.n_series_low);
    get("n_series_high_rpm", p.n_series_high);
    if (j.contains("shortfall_path")) {
        const auto s = j.at("shortfall_path").get<std::string>();
        if (s == "mg1_ratio")
            p.shortfall_path = ShortfallPath::ThroughMg1Ratio;
        else if (s == "mg2_ratio")
            p.shortfall_path = ShortfallPath::ThroughMg2Ratio;
        else
            throw Error(ErrorKind::Config, "shortfall_path must be mg1_ratio or mg2_ratio");
    }
    p.validate();
    return p;
}

nlohmann::json to_json(const PlantParameters& p) {
    return {
        {"mass_kg", p.mass},
        {"gravity_m_per_s2", p.gravity},
        {"rolling_coeff", p.rolling_coeff},
        {"air_density_kg_per_m3", p.air_density},
        {"frontal_area_m2", p.frontal_area},
        {"drag_coeff", p.drag_coeff},
        {"wheel_radius_m", p.wheel_radius},
        {"gear_ratio_mg1", p.gear_ratio_mg1},
        {"final_ratio_mg2", p.final_ratio_mg2},
        {"t_mot1_max_nm", p.t_mot1_max},
        {"t_mot2_max_nm", p.t_mot2_max},
        {"t_eng_max_nm", p.t_eng_max},
        {"p_mot2_max_w", p.p_mot2_max},
        {"p_batt_charge_max_w", p.p_batt_charge_max},
        {"fuel_heat_value_kj_per_g", p.fuel_heat_value},
        {"batt_ocv_v", p.batt_ocv},
        {"batt_resistance_ohm", p.batt_resistance},
        {"batt_capacity_ah", p.batt_capacity},
        {"soc_min", p.soc_min},
        {"soc_max", p.soc_max},
        {"dt_s", p.dt},
        {"n_idle_rpm", p.n_idle},
        {"n_eng_max_rpm", p.n_eng_max},
        {"n_series_low_rpm", p.n_series_low},
        {"n_series_high_rpm", p.n_series_high},
        {"shortfall_path",
         p.shortfall_path == ShortfallPath::ThroughMg1Ratio ? "mg1_ratio" : "mg2_ratio"},
    };
}

PlantParameters load_plant_parameters(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open plant parameter file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
    return plant_parameters_from_json(j);
}

void EfficiencyMap::validate() const {
    require(!speed_grid.empty() && !torque_grid.empty(), ErrorKind::MapFormat, "empty grid");
    require(strictly_increasing(speed_grid), ErrorKind::MapFormat, "speed grid not strictly increasing");
    require(strictly_increasing(torque_grid), ErrorKind::MapFormat, "torque grid not strictly increasing");
    require(values.size() == speed_grid.size() * torque_grid.size(), ErrorKind::MapFormat,
            "value grid dimensions do not match the axes");
    for (double v : values) {
        require(std::isfinite(v), ErrorKind::MapFormat, "non-finite map value");
        if (kind == Kind::Efficiency)
            require(v > 0.0 && v <= 1.0, ErrorKind::MapFormat, "efficiency outside (0, 1]");
        else
            require(v >= 0.0, ErrorKind::MapFormat, "negative fuel rate");
    }
}

double map_lookup(const EfficiencyMap& map, double speed_rpm, double torque_nm) {
    const auto [j, fx] = locate(map.speed_grid, speed_rpm);
    const auto [i, fy] = locate(map.torque_grid, torque_nm);
    const std::size_t j1 = map.speed_grid.size() > 1 ? j + 1 : j;
    const std::size_t i1 = map.torque_grid.size() > 1 ? i + 1 : i;
    const double v00 = map.at(i, j), v01 = map.at(i, j1);
    const double v10 = map.at(i1, j), v11 = map.at(i1, j1);
    const double lo = v00 + fx * (v01 - v00);
    const double hi = v10 + fx * (v11 - v10);
    return lo + fy * (hi - lo);
}

EfficiencyMap parse_map(const std::string& text, EfficiencyMap::Kind kind) {
    EfficiencyMap map;
    map.kind = kind;
    std::istringstream in(text);
    std::string line;
    bool header = true;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        std::vector<double> cells;
        std::string tok;
        while (row >> tok) {
            char* end = nullptr;
            const double x = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0')
                throw Error(ErrorKind::MapFormat, "line " + std::to_string(line_no) + ": bad number '" + tok + "'");
            cells.push_back(x);
        }
        if (cells.size() < 2)
            throw Error(ErrorKind::MapFormat, "line " + std::to_string(line_no) + ": too few cells");
        if (header) {
            map.speed_grid.assign(cells.begin() + 1, cells.end());
            header = false;
            continue;
        }
        if (cells.size() != map.speed_grid.size() + 1)
            throw Error(ErrorKind::MapFormat, "line " + std::to_string(line_no) + ": row width mismatch");
        map.torque_grid.push_back(cells[0]);
        map.values.insert(map.values.end(), cells.begin() + 1, cells.end());
    }
    map.validate();
    return map;
}

EfficiencyMap load_map(const std::filesystem::path& path, EfficiencyMap::Kind kind) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open map file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_map(ss.str(), kind);
}

std::string format_map(const EfficiencyMap& map) {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "# " << (map.kind == EfficiencyMap::Kind::FuelRate ? "fuel rate g/s" : "efficiency")
        << "; first row: speed rpm; first column: torque Nm\n";
    out << 0;
    for (double s : map.speed_grid) out << ' ' << s;
    out << '\n';
    for (std::size_t i = 0; i < map.torque_grid.size(); ++i) {
        out << map.torque_grid[i];
        for (std::size_t j = 0; j < map.speed_grid.size(); ++j) out << ' ' << map.at(i, j);
        out << '\n';
    }
    return out.str();
}

EfficiencyMap synthetic_engine_map(const PlantParameters& params) {
    EfficiencyMap map;
    map.kind = EfficiencyMap::Kind::FuelRate;
    for (double n = 800.0; n <= params.n_eng_max + 1e-9; n += 400.0) map.speed_grid.push_back(n);
    const double t_top = std::ceil(params.t_eng_max / 10.0) * 10.0;
    for (double t = 0.0; t <= t_top + 1e-9; t += 10.0) map.torque_grid.push_back(t);
    for (double t : map.torque_grid) {
        for (double n : map.speed_grid) {
            // Willans line: fuel power = (brake + friction) / indicated efficiency,
            // the indicated efficiency peaking at mid speed.
            const double friction = 12.0 + 2.0e-3 * n;
            const double x = (n - 2400.0) / 2400.0;
            const double eta_indicated = 0.40 - 0.05 * x * x;
            const double fuel_power = (t + friction) * n * kRpmToRadPerSec / eta_indicated;
            map.values.push_back(fuel_power / (params.fuel_heat_value * 1000.0));
        }
    }
    return map;
}

EfficiencyMap synthetic_motor_map(double torque_max, double speed_max_rpm, bool signed_torque) {
    EfficiencyMap map;
    map.kind = EfficiencyMap::Kind::Efficiency;
    const int speed_steps = 12;
    for (int k = 0; k <= speed_steps; ++k) map.speed_grid.push_back(speed_max_rpm * k / speed_steps);
    const int torque_steps = 12;
    for (int k = signed_torque ? -torque_steps : 0; k <= torque_steps; ++k)
        map.torque_grid.push_back(torque_max * k / torque_steps);
    // Copper, iron, windage and standby losses scaled to the machine rating.
    const double c_copper = 0.08 * 280.0 / torque_max;
    for (double t : map.torque_grid) {
        for (double n : map.speed_grid) {
            const double w = n * kRpmToRadPerSec;
            const double p = std::abs(t) * w;
            const double loss = c_copper * t * t + 2.0 * w + 3.0e-3 * w * w + 300.0;
            const double eta = p / (p + loss);
            map.values.push_back(std::clamp(eta, 0.5, 0.95));
        }
    }
    return map;
}

PowertrainMaps synthetic_maps(const PlantParameters& params) {
    const double mg2_speed_max =
        std::ceil(params.mg2_speed(40.0) / 1000.0) * 1000.0;  // covers 144 km/h
    return {synthetic_engine_map(params),
            synthetic_motor_map(params.t_mot1_max, params.n_eng_max, false),
            synthetic_motor_map(params.t_mot2_max, mg2_speed_max, true)};
}

PowertrainMaps load_maps(const std::filesystem::path& engine, const std::filesystem::path& mg1,
                         const std::filesystem::path& mg2) {
    return {load_map(engine, EfficiencyMap::Kind::FuelRate),
            load_map(mg1, EfficiencyMap::Kind::Efficiency),
            load_map(mg2, EfficiencyMap::Kind::Efficiency)};
}

Demand compute_demand(double v, double a, const PlantParameters& p) {
    const double rolling = p.mass * p.gravity * p.rolling_coeff;
    const double aero = 0.5 * p.air_density * p.frontal_area * p.drag_coeff * v * v;
    const double inertial = p.mass * a;
    const double force = rolling + aero + inertial;
    return {force, force * v, force * p.wheel_radius};
}

double battery_current(double p_batt, const PlantParameters& p) {
    const double disc = p.batt_ocv * p.batt_ocv - 4.0 * p.batt_resistance * p_batt;
    if (disc < 0.0)
        throw Error(ErrorKind::PowerInfeasible,
                    "battery power " + std::to_string(p_batt) + " W exceeds U^2/(4R)");
    // (U - sqrt(disc)) / 2R rewritten without the cancellation at small power.
    return 2.0 * p_batt / (p.batt_ocv + std::sqrt(disc));
}

BatteryStep battery_step(double p_batt, double soc, const PlantParameters& p) {
    const double i = battery_current(p_batt, p);
    const double soc_next = soc - i * p.dt / (p.batt_capacity * 3600.0);
    if (soc_next < p.soc_min || soc_next > p.soc_max)
        throw Error(ErrorKind::SocOutOfBounds, "SoC " + std::to_string(soc_next) + " outside bounds");
    return {i, soc_next, p.batt_resistance * i * i};
}

const char* to_string(Mode mode) { return mode == Mode::Series ? "series" : "parallel"; }

ActuatorCommand resolve_actuation(double u_mot1, double u_mot2, double t_dem, double v,
                                  const PlantParameters& p) {
    ActuatorCommand cmd;
    const double u1 = std::isfinite(u_mot1) ? std::clamp(u_mot1, 0.0, 1.0) : 0.0;
    const double u2 = std::isfinite(u_mot2) ? std::clamp(u_mot2, -1.0, 1.0) : 0.0;
    cmd.action_clamped = u1 != u_mot1 || u2 != u_mot2;
    cmd.u_mot1 = u1;
    cmd.u_mot2 = u2;

    const double w_mot2 = p.mg2_speed(v) * kRpmToRadPerSec;
    const double mg2_cap = w_mot2 > 0.0 ? std::min(p.t_mot2_max, p.p_mot2_max / w_mot2) : p.t_mot2_max;
    // Engine-shaft torque needed per Nm of MG2-shaft shortfall.
    const double shaft_ratio = p.shortfall_path == ShortfallPath::ThroughMg1Ratio
                                   ? p.final_ratio_mg2 / p.gear_ratio_mg1
                                   : 1.0;
    const double n_locked = p.locked_engine_speed(v);
    const bool clutch_available = n_locked >= p.n_idle && n_locked <= p.n_eng_max;

    const double needed = t_dem / p.final_ratio_mg2;  // at the MG2 shaft
    double t_gb = 0.0;
    if (t_dem >= 0.0) {
        const double command = std::clamp(u2 * p.t_mot2_max, -mg2_cap, mg2_cap);
        double t_mot2 = std::min(command, needed);
        double shortfall = needed - t_mot2;
        if (shortfall > 0.0 && !clutch_available) {
            // Parallel path unavailable: MG2 carries the demand alone.
            t_mot2 = std::min(needed, mg2_cap);
            shortfall = needed - t_mot2;
            cmd.mg2_limited = true;
            if (shortfall > 0.0) cmd.demand_unmet = true;
            shortfall = 0.0;
        }
        t_gb = shortfall * shaft_ratio;
        if (t_gb > p.t_eng_max) {
            const double excess = (t_gb - p.t_eng_max) / shaft_ratio;
            t_gb = p.t_eng_max;
            const double extra = std::min(excess, std::max(0.0, mg2_cap - t_mot2));
            t_mot2 += extra;
            cmd.mg2_limited = true;
            if (extra < excess) cmd.demand_unmet = true;
        }
        cmd.t_mot2 = t_mot2;
    } else {
        // Braking: MG2 regenerates up to its torque and the battery acceptance
        // limit; friction brakes take the rest.
        double regen_cap = mg2_cap;
        if (w_mot2 > 0.0) regen_cap = std::min(regen_cap, p.p_batt_charge_max / w_mot2);
        cmd.t_mot2 = std::max(needed, -regen_cap);
        cmd.t_brake = (needed - cmd.t_mot2) * p.final_ratio_mg2;
    }

    cmd.t_gb = t_gb;
    cmd.mode = t_gb > 0.0 ? Mode::Parallel : Mode::Series;
    const double gen_request = u1 * p.t_mot1_max;
    cmd.t_mot1 = std::min(gen_request, p.t_eng_max - t_gb);
    cmd.engine_limited = cmd.t_mot1 < gen_request;
    cmd.t_eng = cmd.t_mot1 + t_gb;
    cmd.u_eng = std::clamp((gen_request + t_gb) / p.t_eng_max, 0.0, 1.0);
    return cmd;
}

PowertrainState energy_flow_step(const PowertrainState& state, const ActuatorCommand& cmd,
                                 double v, const PlantParameters& p, const PowertrainMaps& maps) {
    PowertrainState next = state;
    next.mode = cmd.mode;
    next.t_mot1 = cmd.t_mot1;
    next.t_mot2 = cmd.t_mot2;
    next.t_eng = cmd.t_eng;

    next.n_mot2 = p.mg2_speed(v);
    if (cmd.mode == Mode::Parallel)
        next.n_eng = p.locked_engine_speed(v);
    else if (cmd.t_eng > 0.0)
        next.n_eng = p.series_engine_speed(cmd.t_mot1);
    else
        next.n_eng = p.n_idle;
    next.n_mot1 = next.n_eng;

    const double w_eng = next.n_eng * kRpmToRadPerSec;
    const double w_mot2 = next.n_mot2 * kRpmToRadPerSec;

    const double mech1 = cmd.t_mot1 * w_eng;
    next.p_mot1 = mech1 > 0.0 ? mech1 * map_lookup(maps.mg1_efficiency, next.n_mot1, cmd.t_mot1) : 0.0;

    const double mech2 = cmd.t_mot2 * w_mot2;
    if (mech2 == 0.0) {
        next.p_mot2 = 0.0;
    } else {
        const double eta2 = map_lookup(maps.mg2_efficiency, next.n_mot2, cmd.t_mot2);
        next.p_mot2 = cmd.t_mot2 > 0.0 ? mech2 / eta2 : mech2 * eta2;
    }

    const auto& fuel_map = maps.engine_fuel;
    next.engine_saturated = next.n_eng < fuel_map.speed_grid.front() ||
                            next.n_eng > fuel_map.speed_grid.back() ||
                            cmd.t_eng > fuel_map.torque_grid.back();
    next.fuel_rate = map_lookup(fuel_map, next.n_eng, cmd.t_eng);
    next.p_eng = cmd.t_eng * w_eng;

    next.p_batt = next.p_mot2 - next.p_mot1;
    next.i_batt = battery_current(next.p_batt, p);
    next.soc = state.soc - next.i_batt * p.dt / (p.batt_capacity * 3600.0);
    next.soc_violation = next.soc < p.soc_min || next.soc > p.soc_max;

    next.loss_eng = next.fuel_rate * p.fuel_heat_value * 1000.0 - next.p_eng;
    next.loss_batt = p.batt_resistance * next.i_batt * next.i_batt;
    next.p_loss = next.loss_eng + next.loss_batt;
    next.fuel_used = state.fuel_used + next.fuel_rate * p.dt;
    return next;
}

}  // namespace hev
