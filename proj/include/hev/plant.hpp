#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace hev {

// Exact rpm -> rad/s factor. Power from (rpm, Nm) is n*T/9549.3 kW with this
// factor; the rounded 9550 would break the series-mode power identity.
inline constexpr double kRpmToRadPerSec = 3.14159265358979323846 / 30.0;

enum class ShortfallPath {
    // Shortfall torque reaches the engine shaft through the MG1 gear (i_1).
    ThroughMg1Ratio,
    // Engine shaft shares the MG2 final ratio (i_2).
    ThroughMg2Ratio,
};

struct PlantParameters {
    double mass = 1800.0;             // kg
    double gravity = 9.81;            // m/s^2
    double rolling_coeff = 0.012;
    double air_density = 1.205;       // kg/m^3
    double frontal_area = 2.3;        // m^2
    double drag_coeff = 0.30;
    double wheel_radius = 0.32;       // m
    double gear_ratio_mg1 = 3.0;      // i_1, engine/MG1 shaft to wheels
    double final_ratio_mg2 = 8.0;     // i_2, MG2 to wheels
    double t_mot1_max = 120.0;        // Nm
    double t_mot2_max = 280.0;        // Nm
    double t_eng_max = 155.0;         // Nm
    double p_mot2_max = 100e3;        // W, MG2 power envelope
    double p_batt_charge_max = 50e3;  // W, regenerative acceptance limit
    double fuel_heat_value = 43.5;    // kJ/g
    double batt_ocv = 350.0;          // V
    double batt_resistance = 0.15;    // ohm
    double batt_capacity = 54.3;      // Ah
    double soc_min = 0.10;
    double soc_max = 0.90;
    double dt = 1.0;                  // s
    double n_idle = 900.0;            // rpm
    double n_eng_max = 6000.0;        // rpm
    // Series-mode generator speed schedule, linear in generator load.
    double n_series_low = 1200.0;     // rpm at zero load
    double n_series_high = 3200.0;    // rpm at t_mot1_max
    ShortfallPath shortfall_path = ShortfallPath::ThroughMg1Ratio;

    void validate() const;

    // Engine speed when the clutch is closed at vehicle speed v.
    double locked_engine_speed(double v) const;
    double mg2_speed(double v) const;
    double series_engine_speed(double generator_torque) const;
    // Battery energy per unit SoC, J.
    double battery_energy_per_soc() const { return batt_capacity * 3600.0 * batt_ocv; }
};

PlantParameters plant_parameters_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PlantParameters& p);
PlantParameters load_plant_parameters(const std::filesystem::path& path);

// 2-D table over (speed rpm, torque Nm). values are stored torque-major:
// values[i * speed_grid.size() + j] is the entry at (speed_grid[j], torque_grid[i]).
struct EfficiencyMap {
    enum class Kind { FuelRate, Efficiency };

    Kind kind = Kind::Efficiency;
    std::vector<double> speed_grid;
    std::vector<double> torque_grid;
    std::vector<double> values;

    void validate() const;
    double at(std::size_t torque_index, std::size_t speed_index) const {
        return values[torque_index * speed_grid.size() + speed_index];
    }
};

// Bilinear interpolation, exact at nodes; queries outside the grid are clamped
// to the boundary first.
double map_lookup(const EfficiencyMap& map, double speed_rpm, double torque_nm);

// Plain-text grid: first row is the speed grid (led by one ignored corner
// cell), every following row is a torque value followed by the body values.
// Separators are whitespace or commas; '#' starts a comment line.
EfficiencyMap parse_map(const std::string& text, EfficiencyMap::Kind kind);
EfficiencyMap load_map(const std::filesystem::path& path, EfficiencyMap::Kind kind);
std::string format_map(const EfficiencyMap& map);

struct PowertrainMaps {
    EfficiencyMap engine_fuel;  // g/s
    EfficiencyMap mg1_efficiency;
    EfficiencyMap mg2_efficiency;
};

// Synthetic, physically plausible maps: a Willans-line engine with a
// best-efficiency island near 36 % and motor maps peaking at 0.95.
EfficiencyMap synthetic_engine_map(const PlantParameters& params);
EfficiencyMap synthetic_motor_map(double torque_max, double speed_max_rpm, bool signed_torque);
PowertrainMaps synthetic_maps(const PlantParameters& params);
PowertrainMaps load_maps(const std::filesystem::path& engine, const std::filesystem::path& mg1,
                         const std::filesystem::path& mg2);

struct Demand {
    double force;   // N
    double power;   // W
    double torque;  // Nm at the wheels
};

Demand compute_demand(double v, double a, const PlantParameters& params);

struct BatteryStep {
    double current;   // A, positive on discharge
    double soc_next;
    double loss;      // W
};

// Closed-form battery current for a terminal power demand. Throws
// PowerInfeasible above U^2/(4R).
double battery_current(double p_batt, const PlantParameters& params);

// Throws PowerInfeasible, and SocOutOfBounds when the next SoC leaves
// [soc_min, soc_max].
BatteryStep battery_step(double p_batt, double soc, const PlantParameters& params);

enum class Mode { Series, Parallel };

const char* to_string(Mode mode);

struct ActuatorCommand {
    double u_mot1 = 0.0;   // [0, 1] after clamping
    double u_mot2 = 0.0;   // [-1, 1] after clamping
    double u_eng = 0.0;    // [0, 1]
    double t_gb = 0.0;     // Nm, engine shaft torque routed to the wheels
    double t_mot1 = 0.0;   // Nm, generator load on the engine (>= 0)
    double t_mot2 = 0.0;   // Nm, MG2 shaft torque (signed)
    double t_eng = 0.0;    // Nm
    double t_brake = 0.0;  // Nm at the wheels absorbed by friction brakes (<= 0)
    Mode mode = Mode::Series;

    bool action_clamped = false;
    bool mg2_limited = false;    // MG2 envelope or clutch availability overrode u_mot2
    bool engine_limited = false; // generator load reduced to respect t_eng_max
    bool demand_unmet = false;
};

ActuatorCommand resolve_actuation(double u_mot1, double u_mot2, double t_dem, double v,
                                  const PlantParameters& params);

struct PowertrainState {
    double soc = 0.0;
    double fuel_used = 0.0;  // g
    Mode mode = Mode::Series;
    double n_eng = 0.0, n_mot1 = 0.0, n_mot2 = 0.0;  // rpm
    double t_eng = 0.0, t_mot1 = 0.0, t_mot2 = 0.0;  // Nm
    double p_eng = 0.0;      // W, engine shaft power
    double p_mot1 = 0.0;     // W, electrical output of MG1
    double p_mot2 = 0.0;     // W, electrical input of MG2 (negative when generating)
    double p_batt = 0.0;     // W
    double i_batt = 0.0;     // A
    double fuel_rate = 0.0;  // g/s
    double p_loss = 0.0, loss_eng = 0.0, loss_batt = 0.0;  // W
    bool engine_saturated = false;
    bool soc_violation = false;
};

// One forward-Euler tick of the energy flow. The returned state carries the
// updated SoC even when it leaves the bounds; soc_violation flags that case.
PowertrainState energy_flow_step(const PowertrainState& state, const ActuatorCommand& command,
                                 double v, const PlantParameters& params,
                                 const PowertrainMaps& maps);

}  // namespace hev
