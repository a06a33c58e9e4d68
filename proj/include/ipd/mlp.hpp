#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace ipd {

using Rng = std::mt19937_64;

// Single-hidden-layer perceptron: q = W2 relu(W1 x + b1) + b2.
// W1 is stored input-major (w1[k * hidden + j]) so the hidden layer vectorises over j;
// W2 is output x hidden row-major.
struct MlpShape {
  std::size_t input = 0;
  std::size_t hidden = 0;
  std::size_t output = 0;

  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

struct MlpParams {
  MlpShape shape;
  std::vector<double> w1, b1, w2, b2;

  MlpParams() = default;
  explicit MlpParams(MlpShape s);

  void fill(double v);
  std::size_t size() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
  double squared_norm() const;
  bool all_finite() const;

  // Visit every parameter as a flat sequence (w1, b1, w2, b2).
  template <typename F>
  void for_each(F&& f) {
    for (auto* v : {&w1, &b1, &w2, &b2})
      for (double& x : *v) f(x);
  }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

class QNetwork {
 public:
  QNetwork() = default;
  explicit QNetwork(MlpShape shape);
  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases of each layer.
  QNetwork(MlpShape shape, Rng& rng);

  const MlpShape& shape() const { return params_.shape; }
  std::size_t input_dim() const { return params_.shape.input; }
  std::size_t output_dim() const { return params_.shape.output; }

  MlpParams& params() { return params_; }
  const MlpParams& params() const { return params_; }

  // Throws InvalidInput when state.size() != input_dim().
  std::vector<double> forward(std::span<const double> state) const;
  void forward_into(std::span<const double> state, std::span<double> out) const;

 private:
  MlpParams params_;
};

// One gradient-descent step: params -= lr * grad.
void apply_gradient(MlpParams& params, const MlpParams& grad, double learning_rate);

void sync_target(const QNetwork& online, QNetwork& target);

namespace detail {

// Shared by QNetwork and the batch kernels; the fixed summation order keeps every
// evaluation path bitwise identical.
inline void hidden_layer(const MlpParams& p, const double* x, double* h) {
  const std::size_t H = p.shape.hidden;
  const double* b1 = p.b1.data();
  for (std::size_t j = 0; j < H; ++j) h[j] = b1[j];
  for (std::size_t k = 0; k < p.shape.input; ++k) {
    const double xk = x[k];
    const double* w = &p.w1[k * H];
    for (std::size_t j = 0; j < H; ++j) h[j] += w[j] * xk;
  }
  for (std::size_t j = 0; j < H; ++j) h[j] = h[j] > 0.0 ? h[j] : 0.0;
}

// Four interleaved partial sums, combined as (s0 + s1) + (s2 + s3).
inline double dot4(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void output_layer(const MlpParams& p, const double* h, double* q) {
  const std::size_t H = p.shape.hidden;
  for (std::size_t o = 0; o < p.shape.output; ++o) q[o] = p.b2[o] + dot4(&p.w2[o * H], h, H);
}

}  // namespace detail

}  // namespace ipd
