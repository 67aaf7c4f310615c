#include "hev/ddpg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include <fmt/format.h>

#include "hev/error.hpp"

namespace hev {

namespace {

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void expect_word(std::istream& in, const std::string& word) {
    std::string got;
    if (!(in >> got) || got != word)
        throw Error(ErrorKind::ParseError, fmt::format("expected '{}' in agent checkpoint, got '{}'", word, got));
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim)
    : capacity_(capacity), sdim_(state_dim), adim_(action_dim) {
    if (capacity == 0) throw Error(ErrorKind::Config, "replay capacity must be positive");
    states_.resize(capacity * sdim_);
    next_states_.resize(capacity * sdim_);
    actions_.resize(capacity * adim_);
    rewards_.resize(capacity);
    dones_.resize(capacity);
}

void ReplayBuffer::push(const Transition& t) {
    if (t.state.size() != sdim_ || t.next_state.size() != sdim_ || t.action.size() != adim_)
        throw Error(ErrorKind::InvalidArgument, "transition dimensions do not match the buffer");
    if (!all_finite(t.state) || !all_finite(t.next_state) || !all_finite(t.action) || !std::isfinite(t.reward))
        throw Error(ErrorKind::InvalidArgument, "transition has non-finite components");
    std::copy(t.state.begin(), t.state.end(), states_.begin() + head_ * sdim_);
    std::copy(t.next_state.begin(), t.next_state.end(), next_states_.begin() + head_ * sdim_);
    std::copy(t.action.begin(), t.action.end(), actions_.begin() + head_ * adim_);
    rewards_[head_] = t.reward;
    dones_[head_] = t.done ? 1.0 : 0.0;
    head_ = (head_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
    ++inserted_;
}

Transition ReplayBuffer::at(std::size_t i) const {
    if (i >= size_) throw Error(ErrorKind::InvalidArgument, "replay index out of range");
    const std::size_t s = slot(i);
    Transition t;
    t.state.assign(states_.begin() + s * sdim_, states_.begin() + (s + 1) * sdim_);
    t.next_state.assign(next_states_.begin() + s * sdim_, next_states_.begin() + (s + 1) * sdim_);
    t.action.assign(actions_.begin() + s * adim_, actions_.begin() + (s + 1) * adim_);
    t.reward = rewards_[s];
    t.done = dones_[s] != 0.0;
    return t;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
    if (n == 0 || size_ < n)
        throw Error(ErrorKind::BufferTooSmall, fmt::format("buffer holds {} transitions, {} requested", size_, n));
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(size_));
    return idx;
}

void ReplayBuffer::gather(std::span<const std::size_t> indices, Minibatch& out) const {
    const std::size_t n = indices.size();
    out.states.resize(n, sdim_);
    out.next_states.resize(n, sdim_);
    out.actions.resize(n, adim_);
    out.rewards.resize(n);
    out.dones.resize(n);
    for (std::size_t b = 0; b < n; ++b) {
        if (indices[b] >= size_) throw Error(ErrorKind::InvalidArgument, "replay index out of range");
        const std::size_t s = slot(indices[b]);
        std::copy_n(states_.begin() + s * sdim_, sdim_, out.states.row(b).begin());
        std::copy_n(next_states_.begin() + s * sdim_, sdim_, out.next_states.row(b).begin());
        std::copy_n(actions_.begin() + s * adim_, adim_, out.actions.row(b).begin());
        out.rewards[b] = rewards_[s];
        out.dones[b] = dones_[s];
    }
}

Minibatch ReplayBuffer::sample(std::size_t n, Rng& rng) const {
    Minibatch m;
    gather(sample_indices(n, rng), m);
    return m;
}

OuNoise::OuNoise(std::size_t dim, double decay_rate, double sigma_value, double dt_value)
    : decay(decay_rate), sigma(sigma_value), dt(dt_value), value(dim, 0.0) {
    if (!(decay > 0.0) || !(sigma >= 0.0) || !(dt > 0.0))
        throw Error(ErrorKind::Config, "OU noise needs decay > 0, sigma >= 0, dt > 0");
}

const std::vector<double>& OuNoise::step(Rng& rng) {
    const double keep = 1.0 - decay * dt;
    const double kick = sigma * std::sqrt(dt);
    for (auto& x : value) x = x * keep + kick * rng.normal();
    return value;
}

void AgentConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, m); };
    if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must lie in [0, 1)");
    if (batch_size == 0 || batch_size > buffer_capacity) fail("batch size must be in [1, buffer capacity]");
    if (state_dim == 0 || action_dim == 0) fail("state and action dimensions must be positive");
    if (!(actor_lr >= 0.0) || !(critic_lr >= 0.0) || !(l2 >= 0.0)) fail("learning rates and l2 must be >= 0");
    if (!(tau >= 0.0 && tau <= 1.0)) fail("tau must lie in [0, 1]");
    if (!(ou_decay > 0.0) || !(ou_sigma >= 0.0)) fail("OU noise needs decay > 0 and sigma >= 0");
    if (actor_layers < 1 || critic_layers < 1 || hidden_width == 0) fail("network shape must be positive");
}

std::vector<std::size_t> AgentConfig::actor_sizes() const {
    std::vector<std::size_t> s{state_dim};
    for (std::size_t k = 1; k < actor_layers; ++k) s.push_back(hidden_width);
    s.push_back(action_dim);
    return s;
}

std::vector<std::size_t> AgentConfig::critic_sizes() const {
    std::vector<std::size_t> s{state_dim + action_dim};
    for (std::size_t k = 1; k < critic_layers; ++k) s.push_back(hidden_width);
    s.push_back(1);
    return s;
}

DdpgAgent::DdpgAgent(AgentConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      buffer_(config_.buffer_capacity, config_.state_dim, config_.action_dim),
      noise_(config_.action_dim, config_.ou_decay, config_.ou_sigma),
      noise_rng_(derive_seed(seed, "noise")),
      sample_rng_(derive_seed(seed, "minibatch")) {
    config_.validate();
    Rng init(derive_seed(seed, "init"));
    actor_ = DenseNetwork::initialized(config_.actor_sizes(), OutputActivation::Tanh, init, config_.final_layer_init);
    critic_ = DenseNetwork::initialized(config_.critic_sizes(), OutputActivation::Linear, init,
                                        config_.final_layer_init);
    actor_target_ = actor_;
    critic_target_ = critic_;
    actor_opt_ = OptimizerState::for_network(actor_, config_.actor_lr, config_.l2);
    critic_opt_ = OptimizerState::for_network(critic_, config_.critic_lr, config_.l2);
}

std::vector<double> DdpgAgent::act(std::span<const double> state, bool explore) {
    ++calls_.actor;
    auto a = actor_.forward(state);
    if (explore) {
        const auto& n = noise_.step(noise_rng_);
        for (std::size_t j = 0; j < a.size(); ++j) a[j] += noise_scale_ * n[j];
    }
    for (auto& x : a) x = std::clamp(x, -1.0, 1.0);
    return a;
}

void DdpgAgent::begin_episode(std::size_t episode_index) {
    noise_.reset();
    if (config_.noise_anneal_episodes > 0) {
        const double frac = static_cast<double>(episode_index) / static_cast<double>(config_.noise_anneal_episodes);
        noise_scale_ = std::max(0.0, 1.0 - frac);
    } else {
        noise_scale_ = 1.0;
    }
}

bool DdpgAgent::ready() const {
    return buffer_.size() >= config_.batch_size && buffer_.total_inserted() >= config_.warmup_steps;
}

std::vector<double> DdpgAgent::td_targets(const Minibatch& batch) {
    const std::size_t n = batch.states.rows;
    ++calls_.actor_target;
    actor_target_.forward_batch(batch.next_states, target_cache_);
    target_actions_ = target_cache_.output();
    const std::size_t sdim = config_.state_dim, adim = config_.action_dim;
    target_input_.resize(n, sdim + adim);
    for (std::size_t b = 0; b < n; ++b) {
        auto row = target_input_.row(b);
        std::copy_n(batch.next_states.row(b).begin(), sdim, row.begin());
        std::copy_n(target_actions_.row(b).begin(), adim, row.begin() + sdim);
    }
    ++calls_.critic_target;
    critic_target_.forward_batch(target_input_, target_cache_);
    const auto& q = target_cache_.output().data;
    std::vector<double> y(n);
    for (std::size_t b = 0; b < n; ++b) y[b] = batch.rewards[b] + config_.gamma * (1.0 - batch.dones[b]) * q[b];
    return y;
}

double DdpgAgent::update_critic(const Minibatch& batch, std::span<const double> targets) {
    const std::size_t n = batch.states.rows;
    const std::size_t sdim = config_.state_dim, adim = config_.action_dim;
    target_input_.resize(n, sdim + adim);
    for (std::size_t b = 0; b < n; ++b) {
        auto row = target_input_.row(b);
        std::copy_n(batch.states.row(b).begin(), sdim, row.begin());
        std::copy_n(batch.actions.row(b).begin(), adim, row.begin() + sdim);
    }
    ++calls_.critic;
    const double loss = critic_loss_gradients(critic_, target_input_, targets, config_.l2, grads_, ws_);
    apply_update(critic_, critic_opt_, grads_);
    return loss;
}

double DdpgAgent::update_actor(const Matrix& states) {
    ++calls_.actor;
    ++calls_.critic;
    const double value = actor_objective_gradients(actor_, critic_, states, config_.l2, grads_, ws_);
    apply_update(actor_, actor_opt_, grads_);
    return value;
}

void DdpgAgent::update_targets() {
    soft_update(actor_target_, actor_, config_.tau);
    soft_update(critic_target_, critic_, config_.tau);
}

TrainDiagnostics DdpgAgent::train_on_batch(const Minibatch& batch) {
    const auto y = td_targets(batch);
    TrainDiagnostics d;
    d.critic_loss = update_critic(batch, y);
    d.actor_objective = update_actor(batch.states);
    update_targets();
    ++updates_;
    return d;
}

TrainDiagnostics DdpgAgent::train_on_indices(std::span<const std::size_t> indices) {
    buffer_.gather(indices, batch_);
    return train_on_batch(batch_);
}

TrainDiagnostics DdpgAgent::train_step() {
    const auto idx = buffer_.sample_indices(config_.batch_size, sample_rng_);
    return train_on_indices(idx);
}

void DdpgAgent::save(std::ostream& out) const {
    out << "ddpg_agent 1\n";
    out << "buffer " << buffer_.size() << ' ' << buffer_.capacity() << ' ' << buffer_.total_inserted() << '\n';
    out << "updates " << updates_ << '\n';
    out << "noise " << noise_.value.size();
    for (double x : noise_.value) out << ' ' << fmt::format("{:a}", x);
    out << ' ' << fmt::format("{:a}", noise_scale_) << '\n';
    out << "noise_rng " << noise_rng_ << '\n';
    out << "sample_rng " << sample_rng_ << '\n';
    write_network(out, actor_);
    write_network(out, critic_);
    write_network(out, actor_target_);
    write_network(out, critic_target_);
    write_optimizer(out, actor_opt_);
    write_optimizer(out, critic_opt_);
}

void DdpgAgent::load(std::istream& in) {
    expect_word(in, "ddpg_agent");
    int version = 0;
    in >> version;
    if (version != 1) throw Error(ErrorKind::ParseError, "unsupported agent checkpoint version");
    expect_word(in, "buffer");
    std::size_t size = 0, cap = 0;
    std::uint64_t inserted = 0;
    in >> size >> cap >> inserted;
    expect_word(in, "updates");
    in >> updates_;
    expect_word(in, "noise");
    std::size_t dim = 0;
    in >> dim;
    if (dim != config_.action_dim) throw Error(ErrorKind::ShapeMismatch, "noise dimension mismatch");
    std::string tok;
    for (auto& x : noise_.value) {
        in >> tok;
        x = std::strtod(tok.c_str(), nullptr);
    }
    in >> tok;
    noise_scale_ = std::strtod(tok.c_str(), nullptr);
    expect_word(in, "noise_rng");
    in >> noise_rng_;
    expect_word(in, "sample_rng");
    in >> sample_rng_;
    if (!in) throw Error(ErrorKind::ParseError, "truncated agent checkpoint header");
    auto read_matching = [&](DenseNetwork& net) {
        auto loaded = read_network(in);
        if (!loaded.same_architecture(net)) throw Error(ErrorKind::ShapeMismatch, "checkpoint architecture mismatch");
        net = std::move(loaded);
    };
    read_matching(actor_);
    read_matching(critic_);
    read_matching(actor_target_);
    read_matching(critic_target_);
    actor_opt_ = read_optimizer(in);
    critic_opt_ = read_optimizer(in);
}

void DdpgAgent::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    save(out);
}

void DdpgAgent::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
    load(in);
}

}  // namespace hev
