#pragma once

#include <cstddef>
#include <span>

// Dense-layer kernels in two flavours: a serial reference and an OpenMP
// version. Both compute every output element with the same accumulation
// order, so their results are bitwise identical.
//
// Layouts are row-major: x is batch x in, w is out x in, y is batch x out.
namespace hev::kernels {

namespace serial {

// y[b, o] = bias[o] + sum_i x[b, i] * w[o, i]
void dense_forward(std::span<const double> x, std::size_t batch, std::size_t in, std::span<const double> w,
                   std::span<const double> bias, std::size_t out, std::span<double> y);

// dw[o, i] = sum_b dy[b, o] * x[b, i];  dbias[o] = sum_b dy[b, o]  (overwrites)
void dense_backward_params(std::span<const double> dy, std::span<const double> x, std::size_t batch,
                           std::size_t in, std::size_t out, std::span<double> dw, std::span<double> dbias);

// dx[b, i] = sum_o dy[b, o] * w[o, i]  (overwrites)
void dense_backward_input(std::span<const double> dy, std::span<const double> w, std::size_t batch,
                          std::size_t in, std::size_t out, std::span<double> dx);

}  // namespace serial

namespace parallel {

void dense_forward(std::span<const double> x, std::size_t batch, std::size_t in, std::span<const double> w,
                   std::span<const double> bias, std::size_t out, std::span<double> y);
void dense_backward_params(std::span<const double> dy, std::span<const double> x, std::size_t batch,
                           std::size_t in, std::size_t out, std::span<double> dw, std::span<double> dbias);
void dense_backward_input(std::span<const double> dy, std::span<const double> w, std::size_t batch,
                          std::size_t in, std::size_t out, std::span<double> dx);

}  // namespace parallel

// Work (multiply-adds) below which the OpenMP kernels stay on one thread.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

}  // namespace hev::kernels

namespace hev::kernels {

// One backward-induction stage over a uniform SoC grid. For every level i:
//   value_out[i] = min_a stage_cost[a] + V(soc_grid[i] + delta[a])
// where V linearly interpolates value_next and is +inf off the grid. Ties keep
// the lowest action index. policy_out[i] is the minimizing index, or
// stage_cost.size() when no action stays on the grid.
namespace serial {
void dp_stage(std::span<const double> soc_grid, std::span<const double> value_next,
              std::span<const double> stage_cost, std::span<const double> delta, std::span<double> value_out,
              std::span<std::size_t> policy_out);
}
namespace parallel {
void dp_stage(std::span<const double> soc_grid, std::span<const double> value_next,
              std::span<const double> stage_cost, std::span<const double> delta, std::span<double> value_out,
              std::span<std::size_t> policy_out);
}

// Linear interpolation on a uniform grid; +inf outside [grid.front(), grid.back()].
// Inside a cell with one infinite end the finite end is returned, which keeps a
// value function built from it optimistic.
double interpolate_uniform(std::span<const double> grid, std::span<const double> values, double x);

}  // namespace hev::kernels
