#include "hev/environment.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "hev/error.hpp"

namespace hev {

std::optional<double> fuel_economy(double fuel_g, double distance_m, double density_g_per_l) {
    if (!(distance_m > 0.0)) return std::nullopt;
    const double litres = fuel_g / density_g_per_l;
    return litres / (distance_m / 1000.0) * 100.0;
}

void write_trace(std::ostream& out, const std::vector<TraceRow>& rows) {
    out << "time_s\tv_mps\tt_dem_nm\tmode\tsoc\tfuel_rate_gps\tp_loss_w\tloss_eng_w\tloss_batt_w\tu_mot1\tu_mot2\n";
    for (const auto& r : rows)
        fmt::print(out, "{:.0f}\t{:.6f}\t{:.6f}\t{}\t{:.9f}\t{:.9f}\t{:.6f}\t{:.6f}\t{:.6f}\t{:.6f}\t{:.6f}\n",
                   r.time, r.v, r.t_dem, to_string(r.mode), r.soc, r.fuel_rate, r.p_loss, r.loss_eng,
                   r.loss_batt, r.u_mot1, r.u_mot2);
}

EmsEnvironment::EmsEnvironment(EnvironmentConfig config) : config_(std::move(config)) {
    config_.params.validate();
    if (!config_.maps) config_.maps = std::make_shared<const PowertrainMaps>(synthetic_maps(config_.params));
}

Observation EmsEnvironment::reset(const DriveCycle& cycle, double soc_initial) {
    const auto& p = config_.params;
    if (!(soc_initial > p.soc_min && soc_initial < p.soc_max))
        throw Error(ErrorKind::InvalidInitialSoc,
                    fmt::format("initial SoC {} outside ({}, {})", soc_initial, p.soc_min, p.soc_max));
    if (cycle.speeds.size() < 2) throw Error(ErrorKind::NonPositiveDuration, "cycle too short");
    cycle_ = cycle;
    state_ = PowertrainState{};
    state_.soc = soc_initial;
    state_.n_eng = state_.n_mot1 = p.n_idle;
    soc_initial_ = soc_initial;
    distance_ = 0.0;
    cumulative_loss_ = 0.0;
    t_ = 0;
    started_ = true;
    done_ = false;
    terminated_on_soc_ = false;
    trace_.clear();
    return observation();
}

Observation EmsEnvironment::observation() const {
    if (t_ >= cycle_.speeds.size()) return {0.0, state_.soc};
    const auto d = compute_demand(cycle_.speeds[t_], cycle_.acceleration(t_), config_.params);
    return {d.torque, state_.soc};
}

EmsEnvironment::Advance EmsEnvironment::advance(const Action& action) const {
    const auto& p = config_.params;
    const double v = cycle_.speeds[t_];
    const auto demand = compute_demand(v, cycle_.acceleration(t_), p);
    Advance adv;
    adv.command = resolve_actuation(action.u_mot1, action.u_mot2, demand.torque, v, p);
    try {
        adv.next = energy_flow_step(state_, adv.command, v, p, *config_.maps);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::PowerInfeasible) throw;
        adv.next = state_;
        adv.infeasible = true;
    }
    return adv;
}

StepOutcome EmsEnvironment::make_outcome(const Advance& adv, std::size_t t_next) const {
    const auto& p = config_.params;
    StepOutcome out;
    const auto& s = adv.next;
    out.p_loss = s.p_loss;
    out.loss_eng = s.loss_eng;
    out.loss_batt = s.loss_batt;
    out.soc = s.soc;
    out.fuel_rate = s.fuel_rate;
    out.p_batt = s.p_batt;
    out.i_batt = s.i_batt;
    auto& d = out.diagnostics;
    d.mode = adv.command.mode;
    d.action_clamped = adv.command.action_clamped;
    d.mg2_limited = adv.command.mg2_limited;
    d.engine_limited = adv.command.engine_limited;
    d.demand_unmet = adv.command.demand_unmet;
    d.engine_saturated = s.engine_saturated;
    d.soc_violation = s.soc_violation;
    d.power_infeasible = adv.infeasible;
    if (s.soc_violation && config_.soc_policy == SocBoundPolicy::Clamp) out.soc = std::clamp(s.soc, p.soc_min, p.soc_max);
    out.done = t_next >= cycle_.speeds.size() || adv.infeasible ||
               (s.soc_violation && config_.soc_policy == SocBoundPolicy::Terminate);
    if (t_next < cycle_.speeds.size()) {
        const auto dn = compute_demand(cycle_.speeds[t_next], cycle_.acceleration(t_next), p);
        out.observation_next = {dn.torque, out.soc};
    } else {
        out.observation_next = {0.0, out.soc};
    }
    return out;
}

StepOutcome EmsEnvironment::preview(const Action& action) const {
    if (!started_ || done_) throw Error(ErrorKind::SteppedAfterDone, "preview outside a running episode");
    return make_outcome(advance(action), t_ + 1);
}

StepOutcome EmsEnvironment::step(const Action& action) {
    if (!started_ || done_) throw Error(ErrorKind::SteppedAfterDone, "step called on a finished episode");
    const double v = cycle_.speeds[t_];
    Advance adv = advance(action);
    StepOutcome out = make_outcome(adv, t_ + 1);
    if (config_.record_trace) {
        const auto demand = compute_demand(v, cycle_.acceleration(t_), config_.params);
        trace_.push_back({static_cast<double>(t_), v, demand.torque, adv.command.mode, out.soc, out.fuel_rate,
                          out.p_loss, out.loss_eng, out.loss_batt, adv.command.u_mot1, adv.command.u_mot2});
    }
    state_ = adv.next;
    state_.soc = out.soc;
    distance_ += v * config_.params.dt;
    cumulative_loss_ += out.p_loss * config_.params.dt;
    ++t_;
    done_ = out.done;
    terminated_on_soc_ = out.diagnostics.soc_violation && config_.soc_policy == SocBoundPolicy::Terminate;
    return out;
}

EpisodeMetrics EmsEnvironment::finalize() const {
    if (!started_ || !done_) throw Error(ErrorKind::EpisodeNotFinished, "episode still running");
    EpisodeMetrics m;
    m.soc_initial = soc_initial_;
    m.soc_end = state_.soc;
    m.distance = distance_;
    m.cumulative_loss = cumulative_loss_;
    m.fuel_used = state_.fuel_used;
    m.fuel_l_per_100km = fuel_economy(state_.fuel_used, distance_, config_.fuel_density_g_per_l);
    m.steps = t_;
    m.terminated_on_soc = terminated_on_soc_;
    return m;
}

}  // namespace hev
