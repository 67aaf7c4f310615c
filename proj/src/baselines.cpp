#include "hev/baselines.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "hev/error.hpp"
#include "hev/kernels.hpp"

namespace hev {

SweetSpot find_sweet_spot(const PlantParameters& p, const PowertrainMaps& maps) {
    SweetSpot best;
    for (double t = 1.0; t <= p.t_mot1_max + 1e-9; t += 1.0) {
        const double n = p.series_engine_speed(t);
        const double w = n * kRpmToRadPerSec;
        const double fuel_power = map_lookup(maps.engine_fuel, n, t) * p.fuel_heat_value * 1000.0;
        const double electric = t * w * map_lookup(maps.mg1_efficiency, n, t);
        const double eff = fuel_power > 0.0 ? electric / fuel_power : 0.0;
        if (eff > best.efficiency) best = {n, t, eff};
    }
    return best;
}

void RuleBasedConfig::validate(const PlantParameters& p) const {
    if (!(soc_low < soc_high)) throw Error(ErrorKind::Config, "rule-based band needs soc_low < soc_high");
    if (!(sweet_spot.torque_nm >= 0.0 && sweet_spot.torque_nm <= p.t_mot1_max))
        throw Error(ErrorKind::Config, "sweet-spot torque outside the generator range");
}

RuleBasedConfig default_rule_based_config(const PlantParameters& params, const PowertrainMaps& maps) {
    RuleBasedConfig c;
    c.sweet_spot = find_sweet_spot(params, maps);
    return c;
}

RuleBasedController::RuleBasedController(RuleBasedConfig config, const PlantParameters& params)
    : config_(config), u_mot1_on_(config.sweet_spot.torque_nm / params.t_mot1_max) {
    config_.validate(params);
}

Action RuleBasedController::step(double soc) {
    if (soc < config_.soc_low) engaged_ = true;
    else if (soc > config_.soc_high) engaged_ = false;
    return {engaged_ ? u_mot1_on_ : 0.0, config_.u_mot2};
}

void EcmsConfig::validate() const {
    if (u_mot1_levels < 2 || u_mot2_levels < 2) throw Error(ErrorKind::Config, "ECMS grids need >= 2 levels per axis");
    if (!std::isfinite(equivalence_factor) || equivalence_factor < 0.0)
        throw Error(ErrorKind::Config, "equivalence factor must be finite and >= 0");
}

std::vector<Action> uniform_action_grid(std::size_t n1, std::size_t n2) {
    std::vector<Action> grid;
    for (std::size_t i = 0; i < n1; ++i)
        for (std::size_t j = 0; j < n2; ++j)
            grid.push_back({static_cast<double>(i) / static_cast<double>(n1 - 1),
                            -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(n2 - 1)});
    return grid;
}

std::vector<Action> EcmsConfig::action_grid() const { return uniform_action_grid(u_mot1_levels, u_mot2_levels); }

double ecms_cost(const StepOutcome& o, double s, const PlantParameters& p) {
    return o.fuel_rate + s * p.batt_ocv * o.i_batt / (p.fuel_heat_value * 1000.0);
}

EcmsChoice ecms_step(const EmsEnvironment& env, const EcmsConfig& config) {
    const auto& p = env.config().params;
    EcmsChoice best;
    best.cost = std::numeric_limits<double>::infinity();
    for (const auto& a : config.action_grid()) {
        const auto o = env.preview(a);
        if (o.diagnostics.power_infeasible) continue;
        const double c = ecms_cost(o, config.equivalence_factor, p);
        if (c < best.cost || (c == best.cost && std::abs(o.p_batt) < std::abs(best.p_batt))) best = {a, c, o.p_batt};
    }
    if (!std::isfinite(best.cost)) best.action = {0.0, 1.0};
    return best;
}

double terminal_cost(double soc, double soc_ref, double s, const PlantParameters& p) {
    return s * (soc_ref - soc) * p.batt_capacity * 3600.0 * p.batt_ocv / (p.fuel_heat_value * 1000.0);
}

double trajectory_cost(const EpisodeMetrics& m, double soc_ref, double s, const PlantParameters& p) {
    return m.fuel_used + terminal_cost(m.soc_end, soc_ref, s, p);
}

DpResult dp_oracle(const DriveCycle& cycle, const EnvironmentConfig& env_config, double soc_initial,
                   const DpConfig& config) {
    const auto& p = env_config.params;
    validate_cycle(cycle);
    if (config.soc_levels < 2) throw Error(ErrorKind::Config, "DP needs at least two SoC levels");
    DpResult r;
    r.actions = config.actions.empty() ? uniform_action_grid(5, 5) : config.actions;
    const std::size_t stages = config.horizon ? std::min(config.horizon, cycle.size()) : cycle.size();
    const std::size_t work = stages * config.soc_levels * r.actions.size();
    if (work > config.budget)
        throw Error(ErrorKind::GridTooLarge,
                    fmt::format("{} stage-level-action evaluations exceed the budget of {}", work, config.budget));

    const double lo = std::max(p.soc_min, soc_initial - config.soc_half_window);
    const double hi = std::min(p.soc_max, soc_initial + config.soc_half_window);
    for (std::size_t i = 0; i < config.soc_levels; ++i)
        r.soc_grid.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(config.soc_levels - 1));

    // Dynamics do not depend on SoC, so each (stage, action) pair is simulated
    // once from the window centre.
    const std::size_t na = r.actions.size();
    std::vector<double> cost(stages * na), delta(stages * na);
    EmsEnvironment env(env_config);
    for (std::size_t t = 0; t < stages; ++t) {
        const double v = cycle.speeds[t];
        const auto demand = compute_demand(v, cycle.acceleration(t), p);
        PowertrainState s;
        s.soc = 0.5 * (lo + hi);
        for (std::size_t a = 0; a < na; ++a) {
            const auto cmd = resolve_actuation(r.actions[a].u_mot1, r.actions[a].u_mot2, demand.torque, v, p);
            try {
                const auto next = energy_flow_step(s, cmd, v, p, *env.config().maps);
                cost[t * na + a] = next.fuel_rate * p.dt;
                delta[t * na + a] = next.soc - s.soc;
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::PowerInfeasible) throw;
                cost[t * na + a] = std::numeric_limits<double>::infinity();
                delta[t * na + a] = 0.0;
            }
        }
    }

    const double soc_ref = soc_initial;
    r.value.assign(stages + 1, std::vector<double>(config.soc_levels));
    r.policy.assign(stages, std::vector<std::size_t>(config.soc_levels));
    for (std::size_t i = 0; i < config.soc_levels; ++i)
        r.value[stages][i] = terminal_cost(r.soc_grid[i], soc_ref, config.equivalence_factor, p);
    for (std::size_t t = stages; t-- > 0;) {
        const std::span<const double> c(cost.data() + t * na, na), d(delta.data() + t * na, na);
        if (config.parallel)
            kernels::parallel::dp_stage(r.soc_grid, r.value[t + 1], c, d, r.value[t], r.policy[t]);
        else
            kernels::serial::dp_stage(r.soc_grid, r.value[t + 1], c, d, r.value[t], r.policy[t]);
    }
    r.cost = kernels::interpolate_uniform(r.soc_grid, r.value[0], soc_initial);
    return r;
}

Action DpPolicyController::decide(const EmsEnvironment& env) {
    const auto& grid = result_.soc_grid;
    const double step = (grid.back() - grid.front()) / static_cast<double>(grid.size() - 1);
    const double pos = std::round((env.state().soc - grid.front()) / step);
    const auto i = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(grid.size() - 1)));
    const std::size_t t = std::min(env.time(), result_.policy.size() - 1);
    const std::size_t a = result_.policy[t][i];
    if (a >= result_.actions.size()) return {0.0, 1.0};
    return result_.actions[a];
}

}  // namespace hev
