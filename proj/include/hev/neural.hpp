#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "hev/rng.hpp"

namespace hev {

// Row-major batch of vectors.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    void resize(std::size_t r, std::size_t c) {
        rows = r;
        cols = c;
        data.resize(r * c);
    }
    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

enum class OutputActivation { Tanh, Linear };

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;  // out x in, row-major
    std::vector<double> bias;     // out
};

// Activations of every layer for one batch; activations[0] is the input.
struct ForwardCache {
    std::vector<Matrix> activations;
    const Matrix& output() const { return activations.back(); }
};

struct NetworkGradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> bias;
    Matrix input;  // filled only when requested

    double max_abs() const;
};

// Fully connected chain with ReLU hidden layers.
class DenseNetwork {
public:
    DenseNetwork() = default;
    // sizes = {input, hidden..., output}; parameters start at zero.
    DenseNetwork(std::vector<std::size_t> sizes, OutputActivation output);

    // Hidden layers uniform in +-1/sqrt(fan_in); the output layer uniform in
    // +-final_range (fan-in scaled as well when final_range <= 0).
    static DenseNetwork initialized(std::vector<std::size_t> sizes, OutputActivation output, Rng& rng,
                                    double final_range = 3e-3);

    std::size_t input_size() const { return sizes_.front(); }
    std::size_t output_size() const { return sizes_.back(); }
    std::size_t depth() const { return layers_.size(); }
    std::size_t parameter_count() const;
    const std::vector<std::size_t>& sizes() const { return sizes_; }
    OutputActivation output_activation() const { return output_; }
    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

    // Throws ShapeMismatch.
    std::vector<double> forward(std::span<const double> input) const;
    void forward_batch(const Matrix& input, ForwardCache& cache) const;

    // Backpropagates d(loss)/d(output) through the cached pass. Gradients are
    // overwritten, not accumulated.
    void backward(const ForwardCache& cache, const Matrix& d_output, NetworkGradients& grads,
                  bool want_input_gradient) const;

    // Flattened parameters, layer by layer (weights then bias).
    std::vector<double> flat_parameters() const;
    void set_flat_parameters(std::span<const double> values);
    bool same_architecture(const DenseNetwork& other) const;

private:
    std::vector<std::size_t> sizes_{1, 1};
    OutputActivation output_ = OutputActivation::Linear;
    std::vector<DenseLayer> layers_;
};

NetworkGradients zero_gradients(const DenseNetwork& net);
std::vector<double> flatten(const NetworkGradients& grads);

// 0.5 * l2 * sum of squared weights (biases are not regularized).
double l2_penalty(const DenseNetwork& net, double l2);

// Reusable buffers for the loss gradient routines.
struct LossWorkspace {
    ForwardCache cache;
    ForwardCache critic_cache;
    Matrix d_output;
    Matrix critic_input;
    NetworkGradients critic_grads;
};

// Mean squared TD error over the batch plus the L2 penalty. inputs are rows of
// [state, action]. Throws NonFiniteLoss.
double critic_loss_gradients(const DenseNetwork& critic, const Matrix& inputs, std::span<const double> targets,
                             double l2, NetworkGradients& grads, LossWorkspace& ws);

// -mean Q(s, pi(s)) plus the actor's L2 penalty, differentiated through the
// critic into the actor parameters. Throws NonFiniteLoss.
double actor_objective_gradients(const DenseNetwork& actor, const DenseNetwork& critic, const Matrix& states,
                                 double l2, NetworkGradients& grads, LossWorkspace& ws);

// Adam with bias correction. The gradients handed to step() already carry the
// L2 term, so regularization acts as weight decay inside the gradient.
struct OptimizerState {
    double learning_rate = 1e-3;
    double l2 = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t steps = 0;
    std::vector<std::vector<double>> m_weights, v_weights, m_bias, v_bias;

    static OptimizerState for_network(const DenseNetwork& net, double learning_rate, double l2);
};

// Throws ShapeMismatch.
void apply_update(DenseNetwork& net, OptimizerState& state, const NetworkGradients& grads);

// target <- tau * online + (1 - tau) * target. Throws ShapeMismatch.
void soft_update(DenseNetwork& target, const DenseNetwork& online, double tau);

// Text checkpoints. Values are written as hexfloats so a round trip is exact.
void write_network(std::ostream& out, const DenseNetwork& net);
DenseNetwork read_network(std::istream& in);
void write_optimizer(std::ostream& out, const OptimizerState& state);
OptimizerState read_optimizer(std::istream& in);
void save_network(const std::filesystem::path& path, const DenseNetwork& net);
DenseNetwork load_network(const std::filesystem::path& path);

}  // namespace hev
