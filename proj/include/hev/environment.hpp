#pragma once

#include <array>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include "hev/drive_cycle.hpp"
#include "hev/plant.hpp"

namespace hev {

// Network-facing scaling of the observation. The torque demand is divided by
// t_dem_scale; SoC enters as (soc - soc_center) / soc_scale, the identity by
// default.
struct ObservationScale {
    double t_dem_scale = 2000.0;  // Nm
    double soc_center = 0.0;
    double soc_scale = 1.0;
};

struct Observation {
    double t_dem = 0.0;  // Nm
    double soc = 0.0;

    std::array<double, 2> normalized(const ObservationScale& scale) const {
        return {t_dem / scale.t_dem_scale, (soc - scale.soc_center) / scale.soc_scale};
    }
};

struct Action {
    double u_mot1 = 0.0;
    double u_mot2 = 0.0;
};

struct StepDiagnostics {
    Mode mode = Mode::Series;
    bool action_clamped = false;
    bool mg2_limited = false;
    bool engine_limited = false;
    bool engine_saturated = false;
    bool demand_unmet = false;
    bool soc_violation = false;
    bool power_infeasible = false;
};

struct StepOutcome {
    Observation observation_next;
    double p_loss = 0.0;     // W
    double loss_eng = 0.0;   // W
    double loss_batt = 0.0;  // W
    double soc = 0.0;
    double fuel_rate = 0.0;  // g/s
    double p_batt = 0.0;     // W
    double i_batt = 0.0;     // A
    bool done = false;
    StepDiagnostics diagnostics;
};

struct EpisodeMetrics {
    // Empty when the episode covered no distance.
    std::optional<double> fuel_l_per_100km;
    double soc_initial = 0.0;
    double soc_end = 0.0;
    double distance = 0.0;         // m
    double cumulative_loss = 0.0;  // J
    double fuel_used = 0.0;        // g
    std::size_t steps = 0;
    bool terminated_on_soc = false;
};

// L/100 km from grams of fuel, fuel density and distance; empty for zero distance.
std::optional<double> fuel_economy(double fuel_g, double distance_m, double density_g_per_l);

enum class SocBoundPolicy { Terminate, Clamp };

struct EnvironmentConfig {
    PlantParameters params;
    std::shared_ptr<const PowertrainMaps> maps;
    double fuel_density_g_per_l = 745.0;
    SocBoundPolicy soc_policy = SocBoundPolicy::Terminate;
    ObservationScale scale;
    bool record_trace = false;
};

struct TraceRow {
    double time, v, t_dem;
    Mode mode;
    double soc, fuel_rate, p_loss, loss_eng, loss_batt, u_mot1, u_mot2;
};

void write_trace(std::ostream& out, const std::vector<TraceRow>& rows);

// Episodic wrapper around the plant and one drive cycle. Returns raw cost
// signals; reward shaping lives with the controllers.
class EmsEnvironment {
public:
    explicit EmsEnvironment(EnvironmentConfig config);

    // Throws InvalidInitialSoc unless soc_min < soc_initial < soc_max.
    Observation reset(const DriveCycle& cycle, double soc_initial);
    // Throws SteppedAfterDone.
    StepOutcome step(const Action& action);
    // Outcome of `action` from the current state without advancing.
    StepOutcome preview(const Action& action) const;
    // Throws EpisodeNotFinished.
    EpisodeMetrics finalize() const;

    bool done() const { return done_; }
    std::size_t time() const { return t_; }
    Observation observation() const;
    const PowertrainState& state() const { return state_; }
    const EnvironmentConfig& config() const { return config_; }
    const DriveCycle& cycle() const { return cycle_; }
    double current_speed() const { return cycle_.speeds.at(t_); }
    double current_acceleration() const { return cycle_.acceleration(t_); }
    const std::vector<TraceRow>& trace() const { return trace_; }

private:
    struct Advance {
        PowertrainState next;
        ActuatorCommand command;
        bool infeasible = false;
    };
    Advance advance(const Action& action) const;
    StepOutcome make_outcome(const Advance& adv, std::size_t t_next) const;

    EnvironmentConfig config_;
    DriveCycle cycle_;
    PowertrainState state_;
    double soc_initial_ = 0.0;
    double distance_ = 0.0;
    double cumulative_loss_ = 0.0;
    std::size_t t_ = 0;
    bool started_ = false;
    bool done_ = false;
    bool terminated_on_soc_ = false;
    std::vector<TraceRow> trace_;
};

}  // namespace hev
