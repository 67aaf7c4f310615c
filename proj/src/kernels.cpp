#include "hev/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hev::kernels {

namespace {

// Four interleaved partial sums combined in a fixed order, so the result is
// identical wherever the row is computed.
inline double dot(const double* a, const double* b, std::size_t n) {
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        for (std::size_t k = 0; k < 4; ++k) acc[k] += a[i + k] * b[i + k];
    for (; i < n; ++i) acc[0] += a[i] * b[i];
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

inline void forward_row(const double* xr, std::size_t in, const double* w, const double* bias, std::size_t out,
                        double* yr) {
    for (std::size_t o = 0; o < out; ++o) yr[o] = bias[o] + dot(xr, w + o * in, in);
}

inline void params_row(const double* dy, const double* x, std::size_t batch, std::size_t in, std::size_t out,
                       std::size_t o, double* dwr, double* dbias) {
    for (std::size_t i = 0; i < in; ++i) dwr[i] = 0.0;
    double db = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double g = dy[b * out + o];
        db += g;
        const double* xr = x + b * in;
        for (std::size_t i = 0; i < in; ++i) dwr[i] += g * xr[i];
    }
    dbias[o] = db;
}

inline void input_row(const double* dyr, const double* w, std::size_t in, std::size_t out, double* dxr) {
    for (std::size_t i = 0; i < in; ++i) dxr[i] = 0.0;
    for (std::size_t o = 0; o < out; ++o) {
        const double g = dyr[o];
        const double* wr = w + o * in;
        for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wr[i];
    }
}

}  // namespace

namespace serial {

void dense_forward(std::span<const double> x, std::size_t batch, std::size_t in, std::span<const double> w,
                   std::span<const double> bias, std::size_t out, std::span<double> y) {
    for (std::size_t b = 0; b < batch; ++b) forward_row(x.data() + b * in, in, w.data(), bias.data(), out, y.data() + b * out);
}

void dense_backward_params(std::span<const double> dy, std::span<const double> x, std::size_t batch,
                           std::size_t in, std::size_t out, std::span<double> dw, std::span<double> dbias) {
    for (std::size_t o = 0; o < out; ++o) params_row(dy.data(), x.data(), batch, in, out, o, dw.data() + o * in, dbias.data());
}

void dense_backward_input(std::span<const double> dy, std::span<const double> w, std::size_t batch,
                          std::size_t in, std::size_t out, std::span<double> dx) {
    for (std::size_t b = 0; b < batch; ++b) input_row(dy.data() + b * out, w.data(), in, out, dx.data() + b * in);
}

}  // namespace serial

namespace parallel {

void dense_forward(std::span<const double> x, std::size_t batch, std::size_t in, std::span<const double> w,
                   std::span<const double> bias, std::size_t out, std::span<double> y) {
    const long n = static_cast<long>(batch);
#pragma omp parallel for schedule(static) if (batch * in * out >= kParallelThreshold)
    for (long b = 0; b < n; ++b)
        forward_row(x.data() + b * in, in, w.data(), bias.data(), out, y.data() + b * out);
}

void dense_backward_params(std::span<const double> dy, std::span<const double> x, std::size_t batch,
                           std::size_t in, std::size_t out, std::span<double> dw, std::span<double> dbias) {
    const long n = static_cast<long>(out);
#pragma omp parallel for schedule(static) if (batch * in * out >= kParallelThreshold)
    for (long o = 0; o < n; ++o)
        params_row(dy.data(), x.data(), batch, in, out, static_cast<std::size_t>(o), dw.data() + o * in, dbias.data());
}

void dense_backward_input(std::span<const double> dy, std::span<const double> w, std::size_t batch,
                          std::size_t in, std::size_t out, std::span<double> dx) {
    const long n = static_cast<long>(batch);
#pragma omp parallel for schedule(static) if (batch * in * out >= kParallelThreshold)
    for (long b = 0; b < n; ++b) input_row(dy.data() + b * out, w.data(), in, out, dx.data() + b * in);
}

}  // namespace parallel

double interpolate_uniform(std::span<const double> grid, std::span<const double> values, double x) {
    const double lo = grid.front(), hi = grid.back();
    const double tol = 1e-12 * std::max(1.0, std::abs(hi));
    if (!(x >= lo - tol && x <= hi + tol)) return std::numeric_limits<double>::infinity();
    if (grid.size() == 1) return values[0];
    const double step = (hi - lo) / static_cast<double>(grid.size() - 1);
    const double pos = std::clamp((x - lo) / step, 0.0, static_cast<double>(grid.size() - 1));
    const auto k = std::min(static_cast<std::size_t>(pos), grid.size() - 2);
    const double f = pos - static_cast<double>(k);
    if (f == 0.0) return values[k];
    if (!std::isfinite(values[k])) return values[k + 1];
    if (!std::isfinite(values[k + 1])) return values[k];
    return values[k] + f * (values[k + 1] - values[k]);
}

namespace {

inline void dp_level(std::span<const double> soc_grid, std::span<const double> value_next,
                     std::span<const double> stage_cost, std::span<const double> delta, std::size_t i,
                     double& value, std::size_t& policy) {
    value = std::numeric_limits<double>::infinity();
    policy = stage_cost.size();
    for (std::size_t a = 0; a < stage_cost.size(); ++a) {
        const double c = stage_cost[a] + interpolate_uniform(soc_grid, value_next, soc_grid[i] + delta[a]);
        if (c < value) {
            value = c;
            policy = a;
        }
    }
}

}  // namespace

namespace serial {

void dp_stage(std::span<const double> soc_grid, std::span<const double> value_next,
              std::span<const double> stage_cost, std::span<const double> delta, std::span<double> value_out,
              std::span<std::size_t> policy_out) {
    for (std::size_t i = 0; i < soc_grid.size(); ++i)
        dp_level(soc_grid, value_next, stage_cost, delta, i, value_out[i], policy_out[i]);
}

}  // namespace serial

namespace parallel {

void dp_stage(std::span<const double> soc_grid, std::span<const double> value_next,
              std::span<const double> stage_cost, std::span<const double> delta, std::span<double> value_out,
              std::span<std::size_t> policy_out) {
    const long n = static_cast<long>(soc_grid.size());
#pragma omp parallel for schedule(static) if (soc_grid.size() * stage_cost.size() >= kParallelThreshold)
    for (long i = 0; i < n; ++i)
        dp_level(soc_grid, value_next, stage_cost, delta, static_cast<std::size_t>(i), value_out[i], policy_out[i]);
}

}  // namespace parallel

}  // namespace hev::kernels
