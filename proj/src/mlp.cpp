#include "ipd/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ipd/errors.hpp"

namespace ipd {

MlpParams::MlpParams(MlpShape s)
    : shape(s),
      w1(s.hidden * s.input, 0.0),
      b1(s.hidden, 0.0),
      w2(s.output * s.hidden, 0.0),
      b2(s.output, 0.0) {}

void MlpParams::fill(double v) {
  for_each([v](double& x) { x = v; });
}

double MlpParams::squared_norm() const {
  double acc = 0.0;
  for (const auto* v : {&w1, &b1, &w2, &b2})
    for (double x : *v) acc += x * x;
  return acc;
}

bool MlpParams::all_finite() const {
  for (const auto* v : {&w1, &b1, &w2, &b2})
    if (!std::all_of(v->begin(), v->end(), [](double x) { return std::isfinite(x); }))
      return false;
  return true;
}

QNetwork::QNetwork(MlpShape shape) : params_(shape) {
  if (shape.input == 0 || shape.hidden == 0 || shape.output == 0)
    throw InvalidInput("network dimensions must be positive");
}

QNetwork::QNetwork(MlpShape shape, Rng& rng) : QNetwork(shape) {
  const double a1 = 1.0 / std::sqrt(static_cast<double>(shape.input));
  const double a2 = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
  std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
  for (double& x : params_.w1) x = u1(rng);
  for (double& x : params_.b1) x = u1(rng);
  for (double& x : params_.w2) x = u2(rng);
  for (double& x : params_.b2) x = u2(rng);
}

void QNetwork::forward_into(std::span<const double> state, std::span<double> out) const {
  const auto& s = params_.shape;
  if (state.size() != s.input)
    throw InvalidInput("state has " + std::to_string(state.size()) + " entries, network expects " +
                       std::to_string(s.input));
  if (out.size() != s.output) throw InvalidInput("output span has wrong size");
  thread_local std::vector<double> h;
  h.resize(s.hidden);
  detail::hidden_layer(params_, state.data(), h.data());
  detail::output_layer(params_, h.data(), out.data());
}

std::vector<double> QNetwork::forward(std::span<const double> state) const {
  std::vector<double> out(params_.shape.output);
  forward_into(state, out);
  return out;
}

void apply_gradient(MlpParams& params, const MlpParams& grad, double learning_rate) {
  auto step = [learning_rate](std::vector<double>& p, const std::vector<double>& g) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= learning_rate * g[i];
  };
  step(params.w1, grad.w1);
  step(params.b1, grad.b1);
  step(params.w2, grad.w2);
  step(params.b2, grad.b2);
}

void sync_target(const QNetwork& online, QNetwork& target) {
  if (!(online.shape() == target.shape())) throw InvalidInput("sync_target: shape mismatch");
  target.params() = online.params();
}

}  // namespace ipd
