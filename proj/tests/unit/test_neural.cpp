#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "hev/error.hpp"
#include "hev/kernels.hpp"
#include "hev/neural.hpp"

using namespace hev;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (auto& x : m.data) x = rng.uniform(-scale, scale);
    return m;
}

double critic_loss_value(const DenseNetwork& net, const Matrix& x, const std::vector<double>& y, double l2) {
    double s = 0.0;
    for (std::size_t b = 0; b < x.rows; ++b) {
        const double e = net.forward(x.row(b))[0] - y[b];
        s += e * e;
    }
    return s / x.rows + l2_penalty(net, l2);
}

double actor_value(const DenseNetwork& actor, const DenseNetwork& critic, const Matrix& states, double l2) {
    double q = 0.0;
    for (std::size_t b = 0; b < states.rows; ++b) {
        auto a = actor.forward(states.row(b));
        std::vector<double> in(states.row(b).begin(), states.row(b).end());
        in.insert(in.end(), a.begin(), a.end());
        q += critic.forward(in)[0];
    }
    return -q / states.rows + l2_penalty(actor, l2);
}

// Largest componentwise relative error between analytic and central
// difference gradients.
template <class F>
double fd_check(DenseNetwork& net, const std::vector<double>& analytic, F&& value) {
    auto params = net.flat_parameters();
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double keep = params[k];
        params[k] = keep + h;
        net.set_flat_parameters(params);
        const double up = value();
        params[k] = keep - h;
        net.set_flat_parameters(params);
        const double down = value();
        params[k] = keep;
        const double fd = (up - down) / (2 * h);
        const double denom = std::max(std::abs(fd) + std::abs(analytic[k]), 1e-6);
        worst = std::max(worst, std::abs(fd - analytic[k]) / denom);
    }
    net.set_flat_parameters(params);
    return worst;
}

}  // namespace

TEST(DenseNetwork, ZeroNetworkOutputsZero) {
    DenseNetwork net({3, 5, 2}, OutputActivation::Linear);
    const auto y = net.forward(std::vector<double>{1.0, -2.0, 3.0});
    EXPECT_EQ(y, (std::vector<double>{0.0, 0.0}));
}

TEST(DenseNetwork, IdentityLayer) {
    DenseNetwork net({3, 3}, OutputActivation::Linear);
    auto& w = net.layers()[0].weights;
    for (int i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
    const std::vector<double> x{0.5, -7.0, 2.25};
    EXPECT_EQ(net.forward(x), x);
}

TEST(DenseNetwork, MatchesHandMatrixMultiply) {
    Rng rng(3);
    const auto net = DenseNetwork::initialized({2, 3, 1}, OutputActivation::Linear, rng, 0.0);
    const std::vector<double> x{0.7, -1.3};
    const auto& l0 = net.layers()[0];
    const auto& l1 = net.layers()[1];
    double out = l1.bias[0];
    for (int j = 0; j < 3; ++j) {
        double h = l0.bias[j] + l0.weights[j * 2] * x[0] + l0.weights[j * 2 + 1] * x[1];
        out += l1.weights[j] * std::max(h, 0.0);
    }
    EXPECT_NEAR(net.forward(x)[0], out, 1e-12);
}

TEST(DenseNetwork, ShapeMismatch) {
    DenseNetwork net({3, 2}, OutputActivation::Linear);
    try {
        net.forward(std::vector<double>{1.0, 2.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
    }
}

TEST(DenseNetwork, TanhOutputBounded) {
    Rng rng(1);
    auto net = DenseNetwork::initialized({2, 64, 64, 1}, OutputActivation::Tanh, rng, 5.0);
    for (int k = 0; k < 200; ++k) {
        const double y = net.forward(std::vector<double>{rng.uniform(-50, 50), rng.uniform(-50, 50)})[0];
        EXPECT_GE(y, -1.0);
        EXPECT_LE(y, 1.0);
    }
}

TEST(DenseNetwork, InitializationRanges) {
    Rng rng(9);
    const auto net = DenseNetwork::initialized({2, 64, 64, 1}, OutputActivation::Tanh, rng);
    EXPECT_EQ(net.parameter_count(), 2u * 64 + 64 + 64 * 64 + 64 + 64 + 1);
    for (double w : net.layers().back().weights) EXPECT_LE(std::abs(w), 3e-3);
    for (double w : net.layers()[1].weights) EXPECT_LE(std::abs(w), 1.0 / 8.0);
    Rng again(9);
    EXPECT_EQ(DenseNetwork::initialized({2, 64, 64, 1}, OutputActivation::Tanh, again).flat_parameters(),
              net.flat_parameters());
}

TEST(Kernels, SerialAndParallelAgreeBitwise) {
    Rng rng(5);
    for (auto [batch, in, out] : {std::array<std::size_t, 3>{1, 3, 2}, {64, 64, 64}, {256, 66, 64}}) {
        const auto x = random_matrix(batch, in, rng);
        const auto w = random_matrix(out, in, rng);
        const auto b = random_matrix(1, out, rng);
        const auto dy = random_matrix(batch, out, rng);
        std::vector<double> y1(batch * out), y2(batch * out), dw1(out * in), dw2(out * in), db1(out), db2(out),
            dx1(batch * in), dx2(batch * in);
        kernels::serial::dense_forward(x.data, batch, in, w.data, b.data, out, y1);
        kernels::parallel::dense_forward(x.data, batch, in, w.data, b.data, out, y2);
        kernels::serial::dense_backward_params(dy.data, x.data, batch, in, out, dw1, db1);
        kernels::parallel::dense_backward_params(dy.data, x.data, batch, in, out, dw2, db2);
        kernels::serial::dense_backward_input(dy.data, w.data, batch, in, out, dx1);
        kernels::parallel::dense_backward_input(dy.data, w.data, batch, in, out, dx2);
        EXPECT_EQ(y1, y2);
        EXPECT_EQ(dw1, dw2);
        EXPECT_EQ(db1, db2);
        EXPECT_EQ(dx1, dx2);
    }
}

class CriticGradient : public ::testing::TestWithParam<int> {};

TEST_P(CriticGradient, MatchesFiniteDifferences) {
    const int depth = GetParam();
    Rng rng(100 + depth);
    std::vector<std::size_t> sizes{3};
    for (int k = 0; k + 1 < depth; ++k) sizes.push_back(16);
    sizes.push_back(1);
    auto critic = DenseNetwork::initialized(sizes, OutputActivation::Linear, rng, 0.0);
    const auto x = random_matrix(8, 3, rng);
    std::vector<double> y(8);
    for (auto& v : y) v = rng.uniform(-1, 1);
    NetworkGradients g;
    LossWorkspace ws;
    const double l2 = 1e-2;
    const double loss = critic_loss_gradients(critic, x, y, l2, g, ws);
    EXPECT_NEAR(loss, critic_loss_value(critic, x, y, l2), 1e-12);
    const double err = fd_check(critic, flatten(g), [&] { return critic_loss_value(critic, x, y, l2); });
    EXPECT_LT(err, 1e-4) << "depth " << depth;
}

INSTANTIATE_TEST_SUITE_P(Depths, CriticGradient, ::testing::Range(2, 8));

TEST(ActorGradient, MatchesFiniteDifferencesThroughCritic) {
    Rng rng(77);
    auto actor = DenseNetwork::initialized({2, 16, 16, 1}, OutputActivation::Tanh, rng, 0.0);
    const auto critic = DenseNetwork::initialized({3, 16, 16, 1}, OutputActivation::Linear, rng, 0.0);
    const auto s = random_matrix(6, 2, rng);
    NetworkGradients g;
    LossWorkspace ws;
    const double v = actor_objective_gradients(actor, critic, s, 1e-3, g, ws);
    EXPECT_NEAR(v, actor_value(actor, critic, s, 1e-3), 1e-12);
    EXPECT_LT(fd_check(actor, flatten(g), [&] { return actor_value(actor, critic, s, 1e-3); }), 1e-4);
}

TEST(CriticGradient, FullWidthNetworkMatchesFiniteDifferences) {
    Rng rng(5);
    auto critic = DenseNetwork::initialized({3, 64, 64, 1}, OutputActivation::Linear, rng, 0.0);
    const auto x = random_matrix(4, 3, rng);
    const std::vector<double> y{0.1, -0.3, 0.2, 0.0};
    NetworkGradients g;
    LossWorkspace ws;
    critic_loss_gradients(critic, x, y, 1e-4, g, ws);
    EXPECT_LT(fd_check(critic, flatten(g), [&] { return critic_loss_value(critic, x, y, 1e-4); }), 1e-4);
}

TEST(CriticGradient, IdenticalSamplesEqualSingleSample) {
    Rng rng(8);
    const auto critic = DenseNetwork::initialized({3, 8, 1}, OutputActivation::Linear, rng, 0.0);
    const auto one = random_matrix(1, 3, rng);
    Matrix many(5, 3);
    for (std::size_t b = 0; b < 5; ++b) std::copy(one.data.begin(), one.data.end(), many.row(b).begin());
    NetworkGradients g1, g5;
    LossWorkspace ws;
    critic_loss_gradients(critic, one, std::vector<double>{0.4}, 1e-4, g1, ws);
    critic_loss_gradients(critic, many, std::vector<double>(5, 0.4), 1e-4, g5, ws);
    const auto a = flatten(g1), b = flatten(g5);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14 + 1e-12 * std::abs(a[i]));
}

TEST(CriticGradient, ConstantOutputHasZeroWeightGradient) {
    // Only the output bias is set, so the network is constant and matches the
    // target; every data gradient vanishes.
    DenseNetwork critic({3, 4, 1}, OutputActivation::Linear);
    critic.layers()[1].bias[0] = 0.5;
    Rng rng(2);
    const auto x = random_matrix(6, 3, rng);
    NetworkGradients g;
    LossWorkspace ws;
    critic_loss_gradients(critic, x, std::vector<double>(6, 0.5), 0.0, g, ws);
    EXPECT_EQ(g.max_abs(), 0.0);
}

TEST(CriticGradient, NonFiniteLossIsReported) {
    DenseNetwork critic({3, 1}, OutputActivation::Linear);
    Matrix x(1, 3);
    NetworkGradients g;
    LossWorkspace ws;
    try {
        critic_loss_gradients(critic, x, std::vector<double>{NAN}, 0.0, g, ws);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NonFiniteLoss);
    }
}

TEST(Adam, ZeroGradientIsFixedPoint) {
    Rng rng(4);
    auto net = DenseNetwork::initialized({2, 4, 1}, OutputActivation::Linear, rng, 0.0);
    const auto before = net.flat_parameters();
    auto opt = OptimizerState::for_network(net, 1e-3, 0.0);
    apply_update(net, opt, zero_gradients(net));
    EXPECT_EQ(net.flat_parameters(), before);
}

TEST(Adam, FirstStepIsMinusLearningRate) {
    DenseNetwork net({1, 1}, OutputActivation::Linear);
    auto opt = OptimizerState::for_network(net, 1e-3, 0.0);
    auto g = zero_gradients(net);
    g.weights[0][0] = 1.0;
    apply_update(net, opt, g);
    EXPECT_NEAR(net.layers()[0].weights[0], -1e-3 / (1.0 + 1e-8), 1e-18);
    EXPECT_NEAR(net.layers()[0].weights[0], -1e-3, 1e-10);
    EXPECT_EQ(opt.steps, 1u);
}

TEST(Adam, ZeroLearningRateLeavesParameters) {
    Rng rng(4);
    auto net = DenseNetwork::initialized({2, 4, 1}, OutputActivation::Linear, rng, 0.0);
    const auto before = net.flat_parameters();
    auto opt = OptimizerState::for_network(net, 0.0, 0.0);
    auto g = zero_gradients(net);
    for (auto& w : g.weights)
        for (auto& x : w) x = 0.3;
    apply_update(net, opt, g);
    EXPECT_EQ(net.flat_parameters(), before);
}

TEST(Adam, DecayingMomentsNeverGoSubnormal) {
    DenseNetwork net({1, 1}, OutputActivation::Linear);
    auto opt = OptimizerState::for_network(net, 1e-3, 0.0);
    auto g = zero_gradients(net);
    g.weights[0][0] = 1.0;
    apply_update(net, opt, g);
    g.weights[0][0] = 0.0;
    for (int k = 0; k < 250000; ++k) apply_update(net, opt, g);
    for (const auto* moments : {&opt.m_weights, &opt.v_weights})
        for (double x : (*moments)[0]) EXPECT_NE(std::fpclassify(x), FP_SUBNORMAL);
    EXPECT_EQ(opt.m_weights[0][0], 0.0);
    EXPECT_EQ(opt.v_weights[0][0], 0.0);
}

TEST(SoftUpdate, DegenerateBlends) {
    Rng rng(6);
    const auto online = DenseNetwork::initialized({2, 4, 1}, OutputActivation::Linear, rng, 0.0);
    auto target = DenseNetwork::initialized({2, 4, 1}, OutputActivation::Linear, rng, 0.0);
    const auto before = target.flat_parameters();
    soft_update(target, online, 0.0);
    EXPECT_EQ(target.flat_parameters(), before);
    soft_update(target, online, 1.0);
    EXPECT_EQ(target.flat_parameters(), online.flat_parameters());
}

TEST(SoftUpdate, GeometricContraction) {
    Rng rng(6);
    const auto online = DenseNetwork::initialized({2, 8, 1}, OutputActivation::Linear, rng, 0.0);
    auto target = DenseNetwork::initialized({2, 8, 1}, OutputActivation::Linear, rng, 0.0);
    auto dist = [&] {
        const auto a = target.flat_parameters(), b = online.flat_parameters();
        double s = 0;
        for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return std::sqrt(s);
    };
    const double d0 = dist();
    const double tau = 0.05;
    for (int k = 1; k <= 40; ++k) {
        soft_update(target, online, tau);
        EXPECT_NEAR(dist(), d0 * std::pow(1 - tau, k), 1e-12 * d0);
    }
}

TEST(SoftUpdate, ArchitectureMismatch) {
    DenseNetwork a({2, 4, 1}, OutputActivation::Linear), b({2, 5, 1}, OutputActivation::Linear);
    EXPECT_THROW(soft_update(a, b, 0.1), Error);
}

TEST(Checkpoint, NetworkAndOptimizerRoundTripBitExact) {
    Rng rng(12);
    auto net = DenseNetwork::initialized({2, 64, 64, 1}, OutputActivation::Tanh, rng);
    auto opt = OptimizerState::for_network(net, 1e-4, 1e-4);
    NetworkGradients g;
    LossWorkspace ws;
    const auto critic = DenseNetwork::initialized({3, 8, 1}, OutputActivation::Linear, rng, 0.0);
    actor_objective_gradients(net, critic, random_matrix(4, 2, rng), 1e-4, g, ws);
    apply_update(net, opt, g);

    std::stringstream ss;
    write_network(ss, net);
    write_optimizer(ss, opt);
    const auto net2 = read_network(ss);
    const auto opt2 = read_optimizer(ss);
    EXPECT_TRUE(net2.same_architecture(net));
    EXPECT_EQ(net2.flat_parameters(), net.flat_parameters());
    EXPECT_EQ(opt2.steps, opt.steps);
    EXPECT_EQ(opt2.m_weights, opt.m_weights);
    EXPECT_EQ(opt2.v_bias, opt.v_bias);
    EXPECT_EQ(opt2.learning_rate, opt.learning_rate);
}

TEST(Checkpoint, RejectsCorruptHeader) {
    std::istringstream in("dense_network 1\nsizes 2 3 1\noutput sigmoid\n");
    EXPECT_THROW(read_network(in), Error);
}
