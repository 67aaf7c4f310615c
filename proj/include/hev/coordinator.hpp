#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "hev/controller.hpp"
#include "hev/ddpg.hpp"
#include "hev/drive_cycle.hpp"
#include "hev/environment.hpp"

namespace hev {

struct RewardWeights {
    // Weight on power losses, per kW.
    double power_weight = 1.0;
    // SoC deviation weight while SoC is below the reference; zero above it.
    double soc_weight_active = 2.0;
    // Fixed SoC reference; the episode's initial SoC when empty.
    std::optional<double> soc_ref;

    double soc_weight(double soc, double ref) const { return soc < ref ? soc_weight_active : 0.0; }
    double reference(double soc_initial) const { return soc_ref.value_or(soc_initial); }
};

struct HandshakeConfig {
    double relevance_ratio = 0.2;

    void validate() const;
};

// r = -alpha P_loss - beta |soc_ref - soc|
double single_agent_reward(const StepOutcome& outcome, const RewardWeights& weights, double soc_ref);

struct HandshakeRewards {
    double agent1 = 0.0;
    double agent2 = 0.0;
    double global = 0.0;  // -alpha P_loss
    double local1 = 0.0;  // -beta |soc_ref - soc|
    double local2 = 0.0;  // -alpha Loss_eng
};

// r_i = R_rel * r_global + r_local_i
HandshakeRewards handshake_rewards(const StepOutcome& outcome, const RewardWeights& weights,
                                   const HandshakeConfig& config, double soc_ref);

enum class AgentMode { Single, Multi };

// Actor outputs live in (-1, 1): u_mot1 = (y + 1) / 2 and u_mot2 = y. In
// single mode u_mot2 is the constant `single_u_mot2`. Throws AgentCountMismatch.
Action assemble_action(AgentMode mode, std::span<const double> agent_outputs, double single_u_mot2 = 1.0);

struct CoordinatorConfig {
    AgentMode mode = AgentMode::Multi;
    RewardWeights weights;
    HandshakeConfig handshake;
    AgentConfig agent1;  // drives u_mot1
    AgentConfig agent2;  // drives u_mot2 (multi mode only)
    // Single mode: u_mot2 = 1 lets MG2 follow the demand up to saturation.
    double single_u_mot2 = 1.0;
    double soc_initial = 0.28;
    bool learning = true;
    bool shuffle_cycles = true;

    void validate() const;
};

struct EpisodeRecord {
    std::size_t episode = 0;
    double reward_agent_1 = 0.0;
    double reward_agent_2 = 0.0;  // equals agent 1 in single mode
    double soc_end = 0.0;
    std::optional<double> fuel_l_per_100km;
    std::size_t steps = 0;
    bool terminated_on_soc = false;
    double mean_critic_loss = 0.0;
};

struct LearningHistory {
    std::vector<EpisodeRecord> episodes;

    std::vector<double> rewards(int agent) const;
    void write(std::ostream& out) const;
};

class Coordinator {
public:
    Coordinator(CoordinatorConfig config, std::uint64_t seed);

    // Each episode runs on a freshly shuffled learning cycle.
    LearningHistory train(const std::array<PhaseSpec, 4>& phases, const EnvironmentConfig& env_config,
                          std::size_t episodes);
    // Greedy rollout.
    RolloutResult evaluate(const DriveCycle& cycle, const EnvironmentConfig& env_config, double soc_initial);

    Action act(const EmsEnvironment& env, bool explore);

    const CoordinatorConfig& config() const { return config_; }
    std::size_t agent_count() const { return agents_.size(); }
    DdpgAgent& agent(std::size_t i) { return *agents_.at(i); }
    const DdpgAgent& agent(std::size_t i) const { return *agents_.at(i); }

    // One checkpoint file per agent: agent_1.ckpt, agent_2.ckpt.
    void save(const std::filesystem::path& directory) const;
    void load(const std::filesystem::path& directory);

private:
    double train_updates(std::size_t count);

    CoordinatorConfig config_;
    std::vector<std::unique_ptr<DdpgAgent>> agents_;
    Rng cycle_rng_;
    Rng shared_sample_rng_;
    std::size_t episodes_done_ = 0;
};

// Greedy policy of a trained coordinator as a Controller.
class PolicyController : public Controller {
public:
    explicit PolicyController(Coordinator& coordinator) : coordinator_(coordinator) {}
    Action decide(const EmsEnvironment& env) override { return coordinator_.act(env, false); }

private:
    Coordinator& coordinator_;
};

}  // namespace hev
