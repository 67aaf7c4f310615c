#include "hev/neural.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "hev/error.hpp"
#include "hev/kernels.hpp"

namespace hev {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorKind::ShapeMismatch, what);
}

void add_weight_decay(const DenseNetwork& net, double l2, NetworkGradients& grads) {
    if (l2 == 0.0) return;
    const auto& layers = net.layers();
    for (std::size_t k = 0; k < layers.size(); ++k) {
        auto& g = grads.weights[k];
        const auto& w = layers[k].weights;
        for (std::size_t i = 0; i < w.size(); ++i) g[i] += l2 * w[i];
    }
}

void write_values(std::ostream& out, const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) out << (i ? " " : "") << fmt::format("{:a}", values[i]);
    out << '\n';
}

void read_values(std::istream& in, std::vector<double>& values) {
    std::string token;
    for (auto& v : values) {
        if (!(in >> token)) throw Error(ErrorKind::ParseError, "truncated tensor");
        char* end = nullptr;
        v = std::strtod(token.c_str(), &end);
        if (end == token.c_str()) throw Error(ErrorKind::ParseError, "bad tensor value '" + token + "'");
    }
}

void expect(std::istream& in, const std::string& word) {
    std::string got;
    if (!(in >> got) || got != word)
        throw Error(ErrorKind::ParseError, fmt::format("expected '{}' in checkpoint, got '{}'", word, got));
}

}  // namespace

double NetworkGradients::max_abs() const {
    double m = 0.0;
    for (const auto& w : weights)
        for (double x : w) m = std::max(m, std::abs(x));
    for (const auto& b : bias)
        for (double x : b) m = std::max(m, std::abs(x));
    return m;
}

DenseNetwork::DenseNetwork(std::vector<std::size_t> sizes, OutputActivation output)
    : sizes_(std::move(sizes)), output_(output) {
    require(sizes_.size() >= 2, "network needs at least one layer");
    for (auto s : sizes_) require(s > 0, "layer sizes must be positive");
    for (std::size_t k = 0; k + 1 < sizes_.size(); ++k) {
        DenseLayer layer;
        layer.in = sizes_[k];
        layer.out = sizes_[k + 1];
        layer.weights.assign(layer.in * layer.out, 0.0);
        layer.bias.assign(layer.out, 0.0);
        layers_.push_back(std::move(layer));
    }
}

DenseNetwork DenseNetwork::initialized(std::vector<std::size_t> sizes, OutputActivation output, Rng& rng,
                                       double final_range) {
    DenseNetwork net(std::move(sizes), output);
    for (std::size_t k = 0; k < net.layers_.size(); ++k) {
        auto& layer = net.layers_[k];
        const bool last = k + 1 == net.layers_.size();
        const double r = (last && final_range > 0.0) ? final_range : 1.0 / std::sqrt(static_cast<double>(layer.in));
        for (auto& w : layer.weights) w = rng.uniform(-r, r);
        for (auto& b : layer.bias) b = rng.uniform(-r, r);
    }
    return net;
}

std::size_t DenseNetwork::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
}

std::vector<double> DenseNetwork::forward(std::span<const double> input) const {
    require(input.size() == input_size(),
            fmt::format("input has {} values, network expects {}", input.size(), input_size()));
    Matrix x(1, input.size());
    std::copy(input.begin(), input.end(), x.data.begin());
    ForwardCache cache;
    forward_batch(x, cache);
    return cache.output().data;
}

void DenseNetwork::forward_batch(const Matrix& input, ForwardCache& cache) const {
    require(input.cols == input_size(),
            fmt::format("input has {} columns, network expects {}", input.cols, input_size()));
    const std::size_t batch = input.rows;
    cache.activations.resize(layers_.size() + 1);
    cache.activations[0] = input;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const auto& l = layers_[k];
        Matrix& y = cache.activations[k + 1];
        y.resize(batch, l.out);
        kernels::parallel::dense_forward(cache.activations[k].data, batch, l.in, l.weights, l.bias, l.out, y.data);
        if (k + 1 < layers_.size()) {
            for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
        } else if (output_ == OutputActivation::Tanh) {
            for (auto& v : y.data) v = std::tanh(v);
        }
    }
}

void DenseNetwork::backward(const ForwardCache& cache, const Matrix& d_output, NetworkGradients& grads,
                            bool want_input_gradient) const {
    require(cache.activations.size() == layers_.size() + 1, "forward cache does not match the network");
    const std::size_t batch = cache.activations[0].rows;
    require(d_output.rows == batch && d_output.cols == output_size(), "output gradient has the wrong shape");
    grads.weights.resize(layers_.size());
    grads.bias.resize(layers_.size());

    Matrix delta = d_output;
    if (output_ == OutputActivation::Tanh) {
        const auto& y = cache.output().data;
        for (std::size_t i = 0; i < delta.data.size(); ++i) delta.data[i] *= 1.0 - y[i] * y[i];
    }
    Matrix next;
    for (std::size_t k = layers_.size(); k-- > 0;) {
        const auto& l = layers_[k];
        const Matrix& x = cache.activations[k];
        grads.weights[k].resize(l.weights.size());
        grads.bias[k].resize(l.out);
        kernels::parallel::dense_backward_params(delta.data, x.data, batch, l.in, l.out, grads.weights[k],
                                                 grads.bias[k]);
        if (k == 0 && !want_input_gradient) break;
        next.resize(batch, l.in);
        kernels::parallel::dense_backward_input(delta.data, l.weights, batch, l.in, l.out, next.data);
        if (k > 0) {
            for (std::size_t i = 0; i < next.data.size(); ++i)
                if (!(x.data[i] > 0.0)) next.data[i] = 0.0;
        }
        std::swap(delta, next);
    }
    if (want_input_gradient) grads.input = std::move(delta);
}

std::vector<double> DenseNetwork::flat_parameters() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& l : layers_) {
        out.insert(out.end(), l.weights.begin(), l.weights.end());
        out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
}

void DenseNetwork::set_flat_parameters(std::span<const double> values) {
    require(values.size() == parameter_count(), "flat parameter vector has the wrong length");
    std::size_t pos = 0;
    for (auto& l : layers_) {
        std::copy_n(values.begin() + pos, l.weights.size(), l.weights.begin());
        pos += l.weights.size();
        std::copy_n(values.begin() + pos, l.bias.size(), l.bias.begin());
        pos += l.bias.size();
    }
}

bool DenseNetwork::same_architecture(const DenseNetwork& other) const {
    return sizes_ == other.sizes_ && output_ == other.output_;
}

NetworkGradients zero_gradients(const DenseNetwork& net) {
    NetworkGradients g;
    for (const auto& l : net.layers()) {
        g.weights.emplace_back(l.weights.size(), 0.0);
        g.bias.emplace_back(l.bias.size(), 0.0);
    }
    return g;
}

std::vector<double> flatten(const NetworkGradients& grads) {
    std::vector<double> out;
    for (std::size_t k = 0; k < grads.weights.size(); ++k) {
        out.insert(out.end(), grads.weights[k].begin(), grads.weights[k].end());
        out.insert(out.end(), grads.bias[k].begin(), grads.bias[k].end());
    }
    return out;
}

double l2_penalty(const DenseNetwork& net, double l2) {
    if (l2 == 0.0) return 0.0;
    double s = 0.0;
    for (const auto& l : net.layers())
        for (double w : l.weights) s += w * w;
    return 0.5 * l2 * s;
}

double critic_loss_gradients(const DenseNetwork& critic, const Matrix& inputs, std::span<const double> targets,
                             double l2, NetworkGradients& grads, LossWorkspace& ws) {
    require(inputs.rows > 0, "empty batch");
    require(targets.size() == inputs.rows, "one target per batch row required");
    require(critic.output_size() == 1, "critic must have a scalar output");
    critic.forward_batch(inputs, ws.cache);
    const auto& q = ws.cache.output().data;
    const double n = static_cast<double>(inputs.rows);
    ws.d_output.resize(inputs.rows, 1);
    double loss = 0.0;
    for (std::size_t b = 0; b < inputs.rows; ++b) {
        const double e = q[b] - targets[b];
        loss += e * e;
        ws.d_output.data[b] = 2.0 * e / n;
    }
    loss = loss / n + l2_penalty(critic, l2);
    if (!std::isfinite(loss)) throw Error(ErrorKind::NonFiniteLoss, fmt::format("critic loss is {}", loss));
    critic.backward(ws.cache, ws.d_output, grads, false);
    add_weight_decay(critic, l2, grads);
    return loss;
}

double actor_objective_gradients(const DenseNetwork& actor, const DenseNetwork& critic, const Matrix& states,
                                 double l2, NetworkGradients& grads, LossWorkspace& ws) {
    require(states.rows > 0, "empty batch");
    require(critic.output_size() == 1, "critic must have a scalar output");
    const std::size_t sdim = states.cols;
    const std::size_t adim = actor.output_size();
    require(critic.input_size() == sdim + adim, "critic input must be state followed by action");
    actor.forward_batch(states, ws.cache);
    const Matrix& actions = ws.cache.output();

    ws.critic_input.resize(states.rows, sdim + adim);
    for (std::size_t b = 0; b < states.rows; ++b) {
        auto row = ws.critic_input.row(b);
        std::copy_n(states.row(b).begin(), sdim, row.begin());
        std::copy_n(actions.row(b).begin(), adim, row.begin() + sdim);
    }
    critic.forward_batch(ws.critic_input, ws.critic_cache);
    const double n = static_cast<double>(states.rows);
    double mean_q = 0.0;
    for (double q : ws.critic_cache.output().data) mean_q += q;
    mean_q /= n;
    const double value = -mean_q + l2_penalty(actor, l2);
    if (!std::isfinite(value)) throw Error(ErrorKind::NonFiniteLoss, fmt::format("actor objective is {}", value));

    ws.d_output.resize(states.rows, 1);
    std::fill(ws.d_output.data.begin(), ws.d_output.data.end(), -1.0 / n);
    critic.backward(ws.critic_cache, ws.d_output, ws.critic_grads, true);

    Matrix d_action(states.rows, adim);
    for (std::size_t b = 0; b < states.rows; ++b)
        for (std::size_t j = 0; j < adim; ++j) d_action(b, j) = ws.critic_grads.input(b, sdim + j);
    actor.backward(ws.cache, d_action, grads, false);
    add_weight_decay(actor, l2, grads);
    return value;
}

OptimizerState OptimizerState::for_network(const DenseNetwork& net, double learning_rate, double l2) {
    OptimizerState s;
    s.learning_rate = learning_rate;
    s.l2 = l2;
    for (const auto& l : net.layers()) {
        s.m_weights.emplace_back(l.weights.size(), 0.0);
        s.v_weights.emplace_back(l.weights.size(), 0.0);
        s.m_bias.emplace_back(l.bias.size(), 0.0);
        s.v_bias.emplace_back(l.bias.size(), 0.0);
    }
    return s;
}

constexpr double kMomentFloor = 1e-100;

void apply_update(DenseNetwork& net, OptimizerState& s, const NetworkGradients& grads) {
    auto& layers = net.layers();
    require(s.m_weights.size() == layers.size() && grads.weights.size() == layers.size(),
            "optimizer state does not match the network");
    ++s.steps;
    const double t = static_cast<double>(s.steps);
    const double c1 = 1.0 - std::pow(s.beta1, t);
    const double c2 = 1.0 - std::pow(s.beta2, t);
    auto update = [&](std::vector<double>& p, std::vector<double>& m, std::vector<double>& v,
                      const std::vector<double>& g) {
        require(p.size() == m.size() && p.size() == g.size(), "gradient shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
            v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
            // Moments of inactive units decay into subnormals, which are very slow to compute with.
            if (std::abs(m[i]) < kMomentFloor) m[i] = 0.0;
            if (v[i] < kMomentFloor) v[i] = 0.0;
            p[i] -= s.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + s.epsilon);
        }
    };
    for (std::size_t k = 0; k < layers.size(); ++k) {
        update(layers[k].weights, s.m_weights[k], s.v_weights[k], grads.weights[k]);
        update(layers[k].bias, s.m_bias[k], s.v_bias[k], grads.bias[k]);
    }
}

void soft_update(DenseNetwork& target, const DenseNetwork& online, double tau) {
    require(target.same_architecture(online), "soft update between different architectures");
    if (!(tau >= 0.0 && tau <= 1.0)) throw Error(ErrorKind::InvalidArgument, fmt::format("tau {} not in [0, 1]", tau));
    auto& t = target.layers();
    const auto& o = online.layers();
    for (std::size_t k = 0; k < t.size(); ++k) {
        for (std::size_t i = 0; i < t[k].weights.size(); ++i)
            t[k].weights[i] = tau * o[k].weights[i] + (1.0 - tau) * t[k].weights[i];
        for (std::size_t i = 0; i < t[k].bias.size(); ++i)
            t[k].bias[i] = tau * o[k].bias[i] + (1.0 - tau) * t[k].bias[i];
    }
}

void write_network(std::ostream& out, const DenseNetwork& net) {
    out << "dense_network 1\nsizes " << net.sizes().size();
    for (auto s : net.sizes()) out << ' ' << s;
    out << "\noutput " << (net.output_activation() == OutputActivation::Tanh ? "tanh" : "linear") << '\n';
    for (const auto& l : net.layers()) {
        out << "layer " << l.in << ' ' << l.out << '\n';
        write_values(out, l.weights);
        write_values(out, l.bias);
    }
}

DenseNetwork read_network(std::istream& in) {
    expect(in, "dense_network");
    int version = 0;
    in >> version;
    if (version != 1) throw Error(ErrorKind::ParseError, fmt::format("unsupported network format {}", version));
    expect(in, "sizes");
    std::size_t count = 0;
    in >> count;
    if (!in || count < 2 || count > 64) throw Error(ErrorKind::ParseError, "bad layer count");
    std::vector<std::size_t> sizes(count);
    for (auto& s : sizes) in >> s;
    expect(in, "output");
    std::string act;
    in >> act;
    if (act != "tanh" && act != "linear") throw Error(ErrorKind::ParseError, "unknown output activation " + act);
    DenseNetwork net(sizes, act == "tanh" ? OutputActivation::Tanh : OutputActivation::Linear);
    for (auto& l : net.layers()) {
        expect(in, "layer");
        std::size_t i = 0, o = 0;
        in >> i >> o;
        if (i != l.in || o != l.out) throw Error(ErrorKind::ShapeMismatch, "layer header disagrees with sizes");
        read_values(in, l.weights);
        read_values(in, l.bias);
    }
    return net;
}

void write_optimizer(std::ostream& out, const OptimizerState& s) {
    out << "adam 1\n"
        << fmt::format("{:a} {:a} {:a} {:a} {:a} {}\n", s.learning_rate, s.l2, s.beta1, s.beta2, s.epsilon, s.steps)
        << s.m_weights.size() << '\n';
    for (std::size_t k = 0; k < s.m_weights.size(); ++k) {
        out << s.m_weights[k].size() << ' ' << s.m_bias[k].size() << '\n';
        write_values(out, s.m_weights[k]);
        write_values(out, s.v_weights[k]);
        write_values(out, s.m_bias[k]);
        write_values(out, s.v_bias[k]);
    }
}

OptimizerState read_optimizer(std::istream& in) {
    expect(in, "adam");
    int version = 0;
    in >> version;
    if (version != 1) throw Error(ErrorKind::ParseError, "unsupported optimizer format");
    OptimizerState s;
    std::vector<double> hp(5);
    read_values(in, hp);
    s.learning_rate = hp[0];
    s.l2 = hp[1];
    s.beta1 = hp[2];
    s.beta2 = hp[3];
    s.epsilon = hp[4];
    std::size_t layers = 0;
    in >> s.steps >> layers;
    if (!in || layers > 64) throw Error(ErrorKind::ParseError, "bad optimizer header");
    for (std::size_t k = 0; k < layers; ++k) {
        std::size_t nw = 0, nb = 0;
        in >> nw >> nb;
        if (!in) throw Error(ErrorKind::ParseError, "bad optimizer layer header");
        s.m_weights.emplace_back(nw);
        s.v_weights.emplace_back(nw);
        s.m_bias.emplace_back(nb);
        s.v_bias.emplace_back(nb);
        read_values(in, s.m_weights.back());
        read_values(in, s.v_weights.back());
        read_values(in, s.m_bias.back());
        read_values(in, s.v_bias.back());
    }
    return s;
}

void save_network(const std::filesystem::path& path, const DenseNetwork& net) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    write_network(out, net);
}

DenseNetwork load_network(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
    return read_network(in);
}

}  // namespace hev
