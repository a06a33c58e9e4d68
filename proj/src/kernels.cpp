#include "ipd/kernels.hpp"

#include <omp.h>

#include <algorithm>

#include "ipd/errors.hpp"

namespace ipd::kernels {

namespace {

void check_batch(const MlpParams& p, std::span<const double> states, std::size_t rows) {
  if (states.size() != rows * p.shape.input) throw InvalidInput("batch states have wrong size");
}

inline void forward_row(const MlpParams& p, const double* x, double* h, double* q) {
  detail::hidden_layer(p, x, h);
  detail::output_layer(p, h, q);
}

// Adds row b's contribution to the w2, b1 and w1 gradients for hidden units [j0, j1).
// Every element is touched once per row, so iterating rows in ascending order gives
// the same sums however the j range is split.
inline void backprop_row(const MlpParams& p, const double* x, const double* h, std::size_t a,
                         double g, std::size_t j0, std::size_t j1, MlpParams& grad,
                         double* dh) {
  const std::size_t H = p.shape.hidden;
  const double* w2a = &p.w2[a * H];
  double* gw2 = &grad.w2[a * H];
  for (std::size_t j = j0; j < j1; ++j) {
    gw2[j] += g * h[j];
    dh[j] = h[j] > 0.0 ? w2a[j] * g : 0.0;
    grad.b1[j] += dh[j];
  }
  for (std::size_t k = 0; k < p.shape.input; ++k) {
    const double xk = x[k];
    double* gw = &grad.w1[k * H];
    for (std::size_t j = j0; j < j1; ++j) gw[j] += dh[j] * xk;
  }
}

double loss_and_dq(const MlpParams& p, std::span<const int> actions,
                   std::span<const double> targets, std::size_t rows, Workspace& ws) {
  const std::size_t out = p.shape.output;
  const double scale = 2.0 / static_cast<double>(rows);
  double loss = 0.0;
  for (std::size_t b = 0; b < rows; ++b) {
    const auto a = static_cast<std::size_t>(actions[b]);
    if (a >= out) throw InvalidInput("action index out of range");
    const double diff = ws.q[b * out + a] - targets[b];
    loss += diff * diff;
    ws.dq[b] = scale * diff;
  }
  return loss / static_cast<double>(rows);
}

void check_gradient_args(const MlpParams& p, std::span<const double> states,
                         std::span<const int> actions, std::span<const double> targets,
                         MlpParams& grad) {
  const std::size_t rows = actions.size();
  if (rows == 0) throw InvalidInput("empty batch");
  if (targets.size() != rows) throw InvalidInput("targets and actions differ in length");
  check_batch(p, states, rows);
  if (!(grad.shape == p.shape)) grad = MlpParams(p.shape);
}

}  // namespace

void Workspace::reserve(const MlpShape& s, std::size_t rows) {
  hidden.resize(rows * s.hidden);
  q.resize(rows * s.output);
  dq.resize(rows);
}

void forward_batch_serial(const MlpParams& p, std::span<const double> states, std::size_t rows,
                          Workspace& ws) {
  check_batch(p, states, rows);
  ws.reserve(p.shape, rows);
  const auto& s = p.shape;
  for (std::size_t b = 0; b < rows; ++b)
    forward_row(p, &states[b * s.input], &ws.hidden[b * s.hidden], &ws.q[b * s.output]);
}

void forward_batch_omp(const MlpParams& p, std::span<const double> states, std::size_t rows,
                       Workspace& ws) {
  check_batch(p, states, rows);
  ws.reserve(p.shape, rows);
  const auto& s = p.shape;
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < n; ++b)
    forward_row(p, &states[b * s.input], &ws.hidden[b * s.hidden], &ws.q[b * s.output]);
}

double mse_gradient_serial(const MlpParams& p, std::span<const double> states,
                           std::span<const int> actions, std::span<const double> targets,
                           MlpParams& grad, Workspace& ws) {
  check_gradient_args(p, states, actions, targets, grad);
  const std::size_t rows = actions.size();
  forward_batch_serial(p, states, rows, ws);
  const double loss = loss_and_dq(p, actions, targets, rows, ws);

  grad.fill(0.0);
  const auto& s = p.shape;
  std::vector<double> dh(s.hidden);
  for (std::size_t b = 0; b < rows; ++b) {
    const auto a = static_cast<std::size_t>(actions[b]);
    grad.b2[a] += ws.dq[b];
    backprop_row(p, &states[b * s.input], &ws.hidden[b * s.hidden], a, ws.dq[b], 0, s.hidden,
                 grad, dh.data());
  }
  return loss;
}

double mse_gradient_omp(const MlpParams& p, std::span<const double> states,
                        std::span<const int> actions, std::span<const double> targets,
                        MlpParams& grad, Workspace& ws) {
  check_gradient_args(p, states, actions, targets, grad);
  const std::size_t rows = actions.size();
  forward_batch_omp(p, states, rows, ws);
  const double loss = loss_and_dq(p, actions, targets, rows, ws);

  grad.fill(0.0);
  const auto& s = p.shape;
  for (std::size_t b = 0; b < rows; ++b)
    grad.b2[static_cast<std::size_t>(actions[b])] += ws.dq[b];

  // Contiguous blocks of hidden units per thread; rows stay in ascending order.
#pragma omp parallel
  {
    const auto nt = static_cast<std::size_t>(omp_get_num_threads());
    const auto t = static_cast<std::size_t>(omp_get_thread_num());
    const std::size_t j0 = s.hidden * t / nt, j1 = s.hidden * (t + 1) / nt;
    std::vector<double> dh(s.hidden);
    if (j0 < j1)
      for (std::size_t b = 0; b < rows; ++b)
        backprop_row(p, &states[b * s.input], &ws.hidden[b * s.hidden],
                     static_cast<std::size_t>(actions[b]), ws.dq[b], j0, j1, grad, dh.data());
  }
  return loss;
}

bool parallel_kernels_enabled() { return omp_get_max_threads() > 1 && !omp_in_parallel(); }

void forward_batch(const MlpParams& p, std::span<const double> states, std::size_t rows,
                   Workspace& ws) {
  if (parallel_kernels_enabled())
    forward_batch_omp(p, states, rows, ws);
  else
    forward_batch_serial(p, states, rows, ws);
}

double mse_gradient(const MlpParams& p, std::span<const double> states,
                    std::span<const int> actions, std::span<const double> targets,
                    MlpParams& grad, Workspace& ws) {
  if (parallel_kernels_enabled()) return mse_gradient_omp(p, states, actions, targets, grad, ws);
  return mse_gradient_serial(p, states, actions, targets, grad, ws);
}

}  // namespace ipd::kernels
