#include "hev/coordinator.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "hev/error.hpp"

namespace hev {

void HandshakeConfig::validate() const {
    if (!(relevance_ratio >= 0.0 && relevance_ratio <= 1.0))
        throw Error(ErrorKind::Config, fmt::format("relevance ratio {} not in [0, 1]", relevance_ratio));
}

double single_agent_reward(const StepOutcome& o, const RewardWeights& w, double soc_ref) {
    return -w.power_weight * o.p_loss / 1000.0 - w.soc_weight(o.soc, soc_ref) * std::abs(soc_ref - o.soc);
}

HandshakeRewards handshake_rewards(const StepOutcome& o, const RewardWeights& w, const HandshakeConfig& c,
                                   double soc_ref) {
    HandshakeRewards r;
    r.global = -w.power_weight * o.p_loss / 1000.0;
    r.local1 = -w.soc_weight(o.soc, soc_ref) * std::abs(soc_ref - o.soc);
    r.local2 = -w.power_weight * o.loss_eng / 1000.0;
    r.agent1 = c.relevance_ratio * r.global + r.local1;
    r.agent2 = c.relevance_ratio * r.global + r.local2;
    return r;
}

Action assemble_action(AgentMode mode, std::span<const double> y, double single_u_mot2) {
    const std::size_t expected = mode == AgentMode::Single ? 1 : 2;
    if (y.size() != expected)
        throw Error(ErrorKind::AgentCountMismatch,
                    fmt::format("{} agent outputs for a {}-agent system", y.size(), expected));
    Action a;
    a.u_mot1 = (y[0] + 1.0) / 2.0;
    a.u_mot2 = mode == AgentMode::Single ? single_u_mot2 : y[1];
    return a;
}

void CoordinatorConfig::validate() const {
    handshake.validate();
    agent1.validate();
    if (mode == AgentMode::Multi) agent2.validate();
    if (!(weights.power_weight > 0.0)) throw Error(ErrorKind::Config, "power weight must be positive");
    if (!(weights.soc_weight_active >= 0.0)) throw Error(ErrorKind::Config, "SoC weight must be non-negative");
    if (agent1.action_dim != 1 || (mode == AgentMode::Multi && agent2.action_dim != 1))
        throw Error(ErrorKind::Config, "each agent drives exactly one actuator");
    if (mode == AgentMode::Multi && agent1.state_dim != agent2.state_dim)
        throw Error(ErrorKind::Config, "both agents must observe the same state");
    if (mode == AgentMode::Multi && agent1.batch_size != agent2.batch_size)
        throw Error(ErrorKind::Config, "both agents train on the same minibatch indices, batch sizes must match");
}

std::vector<double> LearningHistory::rewards(int agent) const {
    std::vector<double> r;
    r.reserve(episodes.size());
    for (const auto& e : episodes) r.push_back(agent == 1 ? e.reward_agent_1 : e.reward_agent_2);
    return r;
}

void LearningHistory::write(std::ostream& out) const {
    out << "episode\treward_agent_1\treward_agent_2\tsoc_end\tfuel_l_per_100km\tsteps\tterminated\tcritic_loss\n";
    for (const auto& e : episodes) {
        fmt::print(out, "{}\t{:.9g}\t{:.9g}\t{:.9f}\t{}\t{}\t{}\t{:.9g}\n", e.episode, e.reward_agent_1,
                   e.reward_agent_2, e.soc_end,
                   e.fuel_l_per_100km ? fmt::format("{:.6f}", *e.fuel_l_per_100km) : std::string("nan"), e.steps,
                   e.terminated_on_soc ? 1 : 0, e.mean_critic_loss);
    }
}

Coordinator::Coordinator(CoordinatorConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      cycle_rng_(derive_seed(seed, "cycle")),
      shared_sample_rng_(derive_seed(seed, "joint-minibatch")) {
    config_.validate();
    agents_.push_back(std::make_unique<DdpgAgent>(config_.agent1, derive_seed(seed, "agent-1")));
    if (config_.mode == AgentMode::Multi)
        agents_.push_back(std::make_unique<DdpgAgent>(config_.agent2, derive_seed(seed, "agent-2")));
}

Action Coordinator::act(const EmsEnvironment& env, bool explore) {
    const auto s = env.observation().normalized(env.config().scale);
    std::array<double, 2> y{};
    for (std::size_t i = 0; i < agents_.size(); ++i) y[i] = agents_[i]->act(s, explore)[0];
    return assemble_action(config_.mode, std::span<const double>(y.data(), agents_.size()), config_.single_u_mot2);
}

double Coordinator::train_updates(std::size_t count) {
    double loss = 0.0;
    std::size_t done = 0;
    for (std::size_t k = 0; k < count; ++k) {
        if (!agents_[0]->ready()) break;
        if (agents_.size() == 1) {
            loss += agents_[0]->train_step().critic_loss;
        } else {
            // Both agents learn from the same time indices of their private buffers.
            const auto idx = agents_[0]->buffer().sample_indices(config_.agent1.batch_size, shared_sample_rng_);
            loss += agents_[0]->train_on_indices(idx).critic_loss;
            agents_[1]->train_on_indices(idx);
        }
        ++done;
    }
    return done ? loss / static_cast<double>(done) : 0.0;
}

LearningHistory Coordinator::train(const std::array<PhaseSpec, 4>& phases, const EnvironmentConfig& env_config,
                                   std::size_t episodes) {
    LearningHistory history;
    EmsEnvironment env(env_config);
    const bool learn = config_.learning;
    const bool per_step = config_.agent1.cadence == UpdateCadence::PerStep;
    for (std::size_t ep = 0; ep < episodes; ++ep) {
        const auto order = config_.shuffle_cycles ? learning_cycle_order(cycle_rng_.next_u64())
                                                  : std::array<std::size_t, 4>{0, 1, 2, 3};
        const auto cycle = compose_cycle(phases, order);
        env.reset(cycle, config_.soc_initial);
        for (auto& a : agents_) a->begin_episode(episodes_done_);
        const double soc_ref = config_.weights.reference(config_.soc_initial);

        EpisodeRecord rec;
        rec.episode = episodes_done_;
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        while (!env.done()) {
            const auto s = env.observation().normalized(env_config.scale);
            std::array<double, 2> y{};
            for (std::size_t i = 0; i < agents_.size(); ++i) y[i] = agents_[i]->act(s, learn)[0];
            const auto action =
                assemble_action(config_.mode, std::span<const double>(y.data(), agents_.size()), config_.single_u_mot2);
            const auto out = env.step(action);

            double r1, r2;
            if (config_.mode == AgentMode::Single) {
                r1 = r2 = single_agent_reward(out, config_.weights, soc_ref);
            } else {
                const auto hr = handshake_rewards(out, config_.weights, config_.handshake, soc_ref);
                r1 = hr.agent1;
                r2 = hr.agent2;
            }
            rec.reward_agent_1 += r1;
            rec.reward_agent_2 += r2;

            if (learn) {
                const auto s_next = out.observation_next.normalized(env_config.scale);
                // Reaching the end of the cycle is a time limit, not a terminal state.
                const bool terminal = out.diagnostics.soc_violation || out.diagnostics.power_infeasible;
                Transition t;
                t.state.assign(s.begin(), s.end());
                t.next_state.assign(s_next.begin(), s_next.end());
                t.done = terminal;
                for (std::size_t i = 0; i < agents_.size(); ++i) {
                    t.action = {y[i]};
                    t.reward = i == 0 ? r1 : r2;
                    agents_[i]->remember(t);
                }
                if (per_step && agents_[0]->ready()) {
                    loss_sum += train_updates(1);
                    ++loss_count;
                }
            }
        }
        if (learn && !per_step) {
            loss_sum += train_updates(env.time());
            loss_count = 1;
        }
        const auto m = env.finalize();
        rec.soc_end = m.soc_end;
        rec.fuel_l_per_100km = m.fuel_l_per_100km;
        rec.steps = m.steps;
        rec.terminated_on_soc = m.terminated_on_soc;
        rec.mean_critic_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
        history.episodes.push_back(rec);
        ++episodes_done_;
    }
    return history;
}

RolloutResult Coordinator::evaluate(const DriveCycle& cycle, const EnvironmentConfig& env_config,
                                    double soc_initial) {
    EmsEnvironment env(env_config);
    PolicyController policy(*this);
    return rollout(env, policy, cycle, soc_initial);
}

void Coordinator::save(const std::filesystem::path& directory) const {
    std::filesystem::create_directories(directory);
    for (std::size_t i = 0; i < agents_.size(); ++i)
        agents_[i]->save(directory / fmt::format("agent_{}.ckpt", i + 1));
}

void Coordinator::load(const std::filesystem::path& directory) {
    for (std::size_t i = 0; i < agents_.size(); ++i) {
        const auto path = directory / fmt::format("agent_{}.ckpt", i + 1);
        if (!std::filesystem::exists(path)) throw Error(ErrorKind::Io, "missing checkpoint " + path.string());
        agents_[i]->load(path);
    }
}

}  // namespace hev
