#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "hev/neural.hpp"
#include "hev/rng.hpp"

namespace hev {

struct Transition {
    std::vector<double> state;
    std::vector<double> action;  // agent-local, in the actor's (-1, 1) output space
    double reward = 0.0;
    std::vector<double> next_state;
    bool done = false;
};

struct Minibatch {
    Matrix states, actions, next_states;
    std::vector<double> rewards;
    std::vector<double> dones;  // 1 for terminal transitions
};

// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim);

    // Throws InvalidArgument on wrong dimensions or non-finite components.
    void push(const Transition& t);
    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t total_inserted() const { return inserted_; }
    // Logical index: 0 is the oldest stored transition.
    Transition at(std::size_t i) const;

    // Uniform with replacement. Throws BufferTooSmall when size() < n.
    std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;
    void gather(std::span<const std::size_t> indices, Minibatch& out) const;
    Minibatch sample(std::size_t n, Rng& rng) const;

private:
    std::size_t slot(std::size_t i) const { return (head_ + capacity_ - size_ + i) % capacity_; }

    std::size_t capacity_, sdim_, adim_;
    std::size_t head_ = 0, size_ = 0;
    std::uint64_t inserted_ = 0;
    std::vector<double> states_, actions_, rewards_, next_states_, dones_;
};

// Discretized Ornstein-Uhlenbeck process:
// x <- x (1 - decay dt) + sigma sqrt(dt) N(0, 1), per dimension.
struct OuNoise {
    double decay = 0.2;  // 1/s
    double sigma = 0.1;
    double dt = 1.0;     // s
    std::vector<double> value;

    OuNoise() = default;
    OuNoise(std::size_t dim, double decay, double sigma, double dt = 1.0);

    const std::vector<double>& step(Rng& rng);
    void reset() { std::fill(value.begin(), value.end(), 0.0); }
};

enum class UpdateCadence { PerStep, PerEpisode };

struct AgentConfig {
    std::size_t state_dim = 2;
    std::size_t action_dim = 1;
    double gamma = 0.99;
    std::size_t batch_size = 64;
    std::size_t buffer_capacity = 100000;
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    double l2 = 1e-4;
    double tau = 0.005;
    double ou_decay = 0.2;
    double ou_sigma = 0.1;
    // Linear anneal of the noise scale to zero over this many episodes; 0 disables.
    std::size_t noise_anneal_episodes = 0;
    std::size_t actor_layers = 3;
    std::size_t critic_layers = 3;
    std::size_t hidden_width = 64;
    double final_layer_init = 3e-3;
    std::size_t warmup_steps = 1000;
    UpdateCadence cadence = UpdateCadence::PerStep;

    // Throws Config.
    void validate() const;
    std::vector<std::size_t> actor_sizes() const;
    std::vector<std::size_t> critic_sizes() const;
};

struct TrainDiagnostics {
    double critic_loss = 0.0;
    double actor_objective = 0.0;
};

// Forward-pass counters per network, used to check which networks feed the
// TD target.
struct CallCounts {
    std::uint64_t actor = 0, critic = 0, actor_target = 0, critic_target = 0;
};

class DdpgAgent {
public:
    // Initialization, exploration noise and minibatch sampling draw from
    // separate streams derived from `seed`.
    DdpgAgent(AgentConfig config, std::uint64_t seed);

    // Actor output in (-1, 1), plus OU noise when exploring, clamped to [-1, 1].
    std::vector<double> act(std::span<const double> state, bool explore);
    void begin_episode(std::size_t episode_index);

    void remember(const Transition& t) { buffer_.push(t); }
    bool ready() const;

    // Samples a minibatch from the agent's own stream and trains on it.
    TrainDiagnostics train_step();
    // Trains on the given buffer indices: critic, actor, then both targets.
    TrainDiagnostics train_on_indices(std::span<const std::size_t> indices);
    TrainDiagnostics train_on_batch(const Minibatch& batch);

    // y = r + gamma (1 - done) Q'(s', pi'(s')), from the target networks only.
    std::vector<double> td_targets(const Minibatch& batch);
    double update_critic(const Minibatch& batch, std::span<const double> targets);
    double update_actor(const Matrix& states);
    void update_targets();

    const AgentConfig& config() const { return config_; }
    const DenseNetwork& actor() const { return actor_; }
    const DenseNetwork& critic() const { return critic_; }
    const DenseNetwork& actor_target() const { return actor_target_; }
    const DenseNetwork& critic_target() const { return critic_target_; }
    DenseNetwork& mutable_critic() { return critic_; }
    DenseNetwork& mutable_actor() { return actor_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    const OuNoise& noise() const { return noise_; }
    const CallCounts& calls() const { return calls_; }
    Rng& sample_rng() { return sample_rng_; }
    std::uint64_t updates() const { return updates_; }

    // Networks, optimizer moments, noise and RNG state plus a replay-buffer
    // summary; replay contents are not stored.
    void save(std::ostream& out) const;
    void load(std::istream& in);
    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);

private:
    AgentConfig config_;
    DenseNetwork actor_, critic_, actor_target_, critic_target_;
    OptimizerState actor_opt_, critic_opt_;
    ReplayBuffer buffer_;
    OuNoise noise_;
    double noise_scale_ = 1.0;
    Rng noise_rng_, sample_rng_;
    CallCounts calls_;
    std::uint64_t updates_ = 0;

    Minibatch batch_;
    Matrix target_input_, target_actions_;
    ForwardCache target_cache_;
    NetworkGradients grads_;
    LossWorkspace ws_;
};

}  // namespace hev
