#pragma once

// Batched forward and loss-gradient kernels for the Q-network.
//
// Each kernel has a serial reference and an OpenMP variant. The OpenMP variants
// partition work over batch rows (forward) or hidden units (gradient) so every
// output element is accumulated in the same order as the serial code: results
// are bitwise identical for any thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "ipd/mlp.hpp"

namespace ipd::kernels {

struct Workspace {
  std::vector<double> hidden;  // rows x hidden, post-ReLU
  std::vector<double> q;       // rows x output
  std::vector<double> dq;      // rows

  void reserve(const MlpShape& s, std::size_t rows);
};

// states is rows x input row-major. Fills ws.hidden and ws.q.
void forward_batch_serial(const MlpParams& p, std::span<const double> states, std::size_t rows,
                          Workspace& ws);
void forward_batch_omp(const MlpParams& p, std::span<const double> states, std::size_t rows,
                       Workspace& ws);

// Loss = mean_b (q[b, actions[b]] - targets[b])^2. Overwrites grad with dLoss/dparams
// and returns the loss evaluated at p.
double mse_gradient_serial(const MlpParams& p, std::span<const double> states,
                           std::span<const int> actions, std::span<const double> targets,
                           MlpParams& grad, Workspace& ws);
double mse_gradient_omp(const MlpParams& p, std::span<const double> states,
                        std::span<const int> actions, std::span<const double> targets,
                        MlpParams& grad, Workspace& ws);

// Picks the OpenMP path when more than one thread is available and we are not
// already inside a parallel region (repeats are parallelised at a higher level).
bool parallel_kernels_enabled();
void forward_batch(const MlpParams& p, std::span<const double> states, std::size_t rows,
                   Workspace& ws);
double mse_gradient(const MlpParams& p, std::span<const double> states,
                    std::span<const int> actions, std::span<const double> targets,
                    MlpParams& grad, Workspace& ws);

}  // namespace ipd::kernels
