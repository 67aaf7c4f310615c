#pragma once

#include <cstddef>
#include <vector>

#include "hev/controller.hpp"

namespace hev {

// Generator operating point with the best fuel-to-electric efficiency along
// the series speed schedule.
struct SweetSpot {
    double speed_rpm = 0.0;
    double torque_nm = 0.0;
    double efficiency = 0.0;  // electric output over fuel power
};

SweetSpot find_sweet_spot(const PlantParameters& params, const PowertrainMaps& maps);

struct RuleBasedConfig {
    double soc_low = 0.30;
    double soc_high = 0.32;
    SweetSpot sweet_spot;
    double u_mot2 = 1.0;  // MG2 follows the demand

    // Throws Config.
    void validate(const PlantParameters& params) const;
};

RuleBasedConfig default_rule_based_config(const PlantParameters& params, const PowertrainMaps& maps);

// Thermostat: generator on at the sweet spot below soc_low, off above
// soc_high, previous state in between.
class RuleBasedController : public Controller {
public:
    RuleBasedController(RuleBasedConfig config, const PlantParameters& params);

    void reset() override { engaged_ = false; }
    Action step(double soc);
    Action decide(const EmsEnvironment& env) override { return step(env.state().soc); }
    bool engaged() const { return engaged_; }

private:
    RuleBasedConfig config_;
    double u_mot1_on_;
    bool engaged_ = false;
};

struct EcmsConfig {
    double equivalence_factor = 2.5;
    std::size_t u_mot1_levels = 11;
    std::size_t u_mot2_levels = 11;

    void validate() const;
    std::vector<Action> action_grid() const;
};

struct EcmsChoice {
    Action action;
    double cost = 0.0;  // g/s
    double p_batt = 0.0;
};

// Instantaneous cost of an outcome: fuel + s * battery chemical power / H_f.
double ecms_cost(const StepOutcome& outcome, double equivalence_factor, const PlantParameters& params);

// Grid argmin over one-step previews; ties go to the lower |P_batt|.
EcmsChoice ecms_step(const EmsEnvironment& env, const EcmsConfig& config);

class EcmsController : public Controller {
public:
    explicit EcmsController(EcmsConfig config) : config_(config) { config_.validate(); }
    Action decide(const EmsEnvironment& env) override { return ecms_step(env, config_).action; }

private:
    EcmsConfig config_;
};

struct DpConfig {
    std::size_t soc_levels = 21;
    double soc_half_window = 0.05;  // grid spans soc_initial +- this
    std::vector<Action> actions;    // empty: 5 x 5 grid
    // Terminal cost prices the SoC shortfall against the reference like ECMS.
    double equivalence_factor = 2.5;
    std::size_t budget = 5'000'000;  // stages x levels x actions
    std::size_t horizon = 0;         // stages to plan; 0 plans the whole cycle
    bool parallel = true;
};

std::vector<Action> uniform_action_grid(std::size_t u_mot1_levels, std::size_t u_mot2_levels);

struct DpResult {
    double cost = 0.0;  // g, from soc_initial
    std::vector<double> soc_grid;
    std::vector<Action> actions;
    // policy[t][i]: action index at stage t and SoC level i.
    std::vector<std::vector<std::size_t>> policy;
    std::vector<std::vector<double>> value;  // value[t][i], t = 0..T
};

// Terminal cost in grams for ending at `soc`.
double terminal_cost(double soc, double soc_ref, double equivalence_factor, const PlantParameters& params);

// Backward induction over a discretized SoC. Stage cost is fuel (g).
// Throws GridTooLarge.
DpResult dp_oracle(const DriveCycle& cycle, const EnvironmentConfig& env_config, double soc_initial,
                   const DpConfig& config);

// Fuel plus terminal cost of a finished rollout, on the DP's terms.
double trajectory_cost(const EpisodeMetrics& metrics, double soc_ref, double equivalence_factor,
                       const PlantParameters& params);

// Follows a DP policy forward from soc_initial, picking the action of the
// nearest grid level.
class DpPolicyController : public Controller {
public:
    explicit DpPolicyController(const DpResult& result) : result_(result) {}
    Action decide(const EmsEnvironment& env) override;

private:
    const DpResult& result_;
};

}  // namespace hev
