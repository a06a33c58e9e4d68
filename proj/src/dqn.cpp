#include "ipd/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "ipd/errors.hpp"

namespace ipd {

Transition Batch::at(std::size_t i) const {
  Transition t;
  t.state.assign(states.begin() + static_cast<std::ptrdiff_t>(i * state_dim),
                 states.begin() + static_cast<std::ptrdiff_t>((i + 1) * state_dim));
  t.action = actions[i];
  t.reward = rewards[i];
  t.terminal = terminal[i] != 0;
  if (!t.terminal)
    t.next_state.assign(next_states.begin() + static_cast<std::ptrdiff_t>(i * state_dim),
                        next_states.begin() + static_cast<std::ptrdiff_t>((i + 1) * state_dim));
  return t;
}

Batch Batch::from(std::span<const Transition> ts) {
  Batch b;
  if (ts.empty()) return b;
  b.state_dim = ts.front().state.size();
  for (const auto& t : ts) {
    if (t.state.size() != b.state_dim) throw InvalidInput("transitions differ in state size");
    b.states.insert(b.states.end(), t.state.begin(), t.state.end());
    if (t.terminal) {
      b.next_states.insert(b.next_states.end(), b.state_dim, 0.0);
    } else {
      if (t.next_state.size() != b.state_dim) throw InvalidInput("next_state has wrong size");
      b.next_states.insert(b.next_states.end(), t.next_state.begin(), t.next_state.end());
    }
    b.actions.push_back(t.action);
    b.rewards.push_back(t.reward);
    b.terminal.push_back(t.terminal ? 1 : 0);
  }
  return b;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t state_dim)
    : capacity_(capacity), state_dim_(state_dim) {
  if (capacity == 0) throw InvalidInput("replay buffer capacity must be positive");
  if (state_dim == 0) throw InvalidInput("replay buffer state_dim must be positive");
}

void ReplayBuffer::push(const Transition& t) {
  if (t.state.size() != state_dim_) throw InvalidInput("transition state has wrong size");
  if (!t.terminal && t.next_state.size() != state_dim_)
    throw InvalidInput("transition next_state has wrong size");
  if (t.action < 0) throw InvalidInput("negative action index");

  auto write = [&](std::size_t phys) {
    std::copy(t.state.begin(), t.state.end(), states_.begin() + phys * state_dim_);
    auto ns = next_states_.begin() + phys * state_dim_;
    if (t.terminal)
      std::fill(ns, ns + static_cast<std::ptrdiff_t>(state_dim_), 0.0);
    else
      std::copy(t.next_state.begin(), t.next_state.end(), ns);
    actions_[phys] = t.action;
    rewards_[phys] = t.reward;
    terminal_[phys] = t.terminal ? 1 : 0;
  };

  if (count_ < capacity_) {
    states_.resize(states_.size() + state_dim_);
    next_states_.resize(next_states_.size() + state_dim_);
    actions_.push_back(0);
    rewards_.push_back(0.0);
    terminal_.push_back(0);
    write(count_);
    ++count_;
    return;
  }
  write(head_);
  head_ = (head_ + 1) % capacity_;
}

Transition ReplayBuffer::at(std::size_t i) const {
  if (i >= count_) throw InvalidInput("replay buffer index out of range");
  Batch b;
  b.state_dim = state_dim_;
  copy_into(slot(i), b);
  return b.at(0);
}

void ReplayBuffer::copy_into(std::size_t phys, Batch& b) const {
  const auto off = static_cast<std::ptrdiff_t>(phys * state_dim_);
  const auto dim = static_cast<std::ptrdiff_t>(state_dim_);
  b.states.insert(b.states.end(), states_.begin() + off, states_.begin() + off + dim);
  b.next_states.insert(b.next_states.end(), next_states_.begin() + off,
                       next_states_.begin() + off + dim);
  b.actions.push_back(actions_[phys]);
  b.rewards.push_back(rewards_[phys]);
  b.terminal.push_back(terminal_[phys]);
}

std::optional<Batch> ReplayBuffer::sample(std::size_t batch_size, Rng& rng) const {
  if (batch_size == 0 || count_ < batch_size) return std::nullopt;
  Batch b;
  b.state_dim = state_dim_;
  b.states.reserve(batch_size * state_dim_);
  b.next_states.reserve(batch_size * state_dim_);
  b.actions.reserve(batch_size);
  b.rewards.reserve(batch_size);
  b.terminal.reserve(batch_size);
  std::uniform_int_distribution<std::size_t> pick(0, count_ - 1);
  for (std::size_t i = 0; i < batch_size; ++i) copy_into(pick(rng), b);
  return b;
}

double EpsilonSchedule::at(std::size_t episode) const {
  const double span = decay_fraction * static_cast<double>(horizon_episodes);
  const auto e = static_cast<double>(episode);
  if (span <= 0.0 || e >= span) return eps_min;
  return eps_max - (eps_max - eps_min) * (e / span);
}

void EpsilonSchedule::validate() const {
  if (!(eps_min >= 0.0 && eps_max <= 1.0 && eps_min <= eps_max))
    throw ConfigError("epsilon bounds must satisfy 0 <= eps_min <= eps_max <= 1");
  if (!(decay_fraction > 0.0 && decay_fraction <= 1.0))
    throw ConfigError("epsilon decay fraction must be in (0, 1]");
  if (horizon_episodes == 0) throw ConfigError("epsilon horizon must be positive");
}

void TrainerConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must be in [0, 1)");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (target_update_interval == 0) throw ConfigError("target update interval must be positive");
}

int select_action(std::span<const double> qvalues, double epsilon, Rng& rng,
                  std::optional<std::size_t> masked) {
  const std::size_t n = qvalues.size();
  if (n == 0) throw InvalidInput("select_action: empty q-value vector");
  const bool has_mask = masked.has_value() && *masked < n;
  const std::size_t choices = has_mask ? n - 1 : n;
  if (choices == 0) throw InvalidInput("select_action: every action is masked");

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, choices - 1);
    std::size_t idx = pick(rng);
    if (has_mask && idx >= *masked) ++idx;
    return static_cast<int>(idx);
  }
  std::size_t best = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (has_mask && i == *masked) continue;
    if (best == n || qvalues[i] > qvalues[best]) best = i;
  }
  return static_cast<int>(best);
}

void td_targets(const QNetwork& target_net, const Batch& batch, double gamma,
                std::vector<double>& out, kernels::Workspace& ws) {
  const std::size_t rows = batch.size();
  out.resize(rows);
  kernels::forward_batch(target_net.params(), batch.next_states, rows, ws);
  const std::size_t nout = target_net.output_dim();
  for (std::size_t b = 0; b < rows; ++b) {
    if (batch.terminal[b]) {
      out[b] = batch.rewards[b];
      continue;
    }
    const double* q = &ws.q[b * nout];
    out[b] = batch.rewards[b] + gamma * *std::max_element(q, q + nout);
  }
}

double train_step(QNetwork& net, const QNetwork& target_net, const Batch& batch,
                  const TrainerConfig& cfg, TrainScratch& scratch) {
  if (batch.size() == 0) throw InvalidInput("train_step: empty batch");
  if (batch.state_dim != net.input_dim() || !(net.shape() == target_net.shape()))
    throw InvalidInput("train_step: batch and network dimensions disagree");
  for (int a : batch.actions)
    if (a < 0 || static_cast<std::size_t>(a) >= net.output_dim())
      throw InvalidInput("train_step: action index out of range");

  td_targets(target_net, batch, cfg.gamma, scratch.td_targets, scratch.target);
  const double loss = kernels::mse_gradient(net.params(), batch.states, batch.actions,
                                            scratch.td_targets, scratch.grad, scratch.online);
  const double gnorm = std::sqrt(scratch.grad.squared_norm());
  if (!std::isfinite(loss) || !std::isfinite(gnorm)) {
    std::ostringstream msg;
    msg << "non-finite training loss (loss=" << loss << ", grad_norm=" << gnorm
        << ", batch=" << batch.size() << ", lr=" << cfg.learning_rate << ")";
    throw NumericalFailure(msg.str());
  }
  double lr = cfg.learning_rate;
  if (cfg.max_grad_norm > 0.0 && gnorm > cfg.max_grad_norm) lr *= cfg.max_grad_norm / gnorm;
  apply_gradient(net.params(), scratch.grad, lr);
  return loss;
}

double train_step(QNetwork& net, const QNetwork& target_net, const Batch& batch,
                  const TrainerConfig& cfg) {
  TrainScratch scratch;
  return train_step(net, target_net, batch, cfg, scratch);
}

ModelHyper ModelHyper::selection() {
  ModelHyper h;
  h.eps_min = 0.0001;
  h.eps_decay = 0.3;
  h.learning_rate = 0.01;
  h.buffer_capacity = 131072;
  return h;
}

ModelHyper ModelHyper::playing() {
  ModelHyper h;
  h.eps_min = 0.01;
  h.eps_decay = 0.3;
  h.learning_rate = 0.1;
  h.buffer_capacity = 131072;
  return h;
}

ModelHyper ModelHyper::punishing() {
  ModelHyper h;
  h.eps_min = 0.2;
  h.eps_decay = 0.5;
  h.learning_rate = 0.001;
  h.buffer_capacity = 524288;
  return h;
}

EpsilonSchedule ModelHyper::schedule(std::size_t horizon_episodes) const {
  return EpsilonSchedule{eps_max, eps_min, eps_decay, horizon_episodes};
}

TrainerConfig ModelHyper::trainer() const {
  return TrainerConfig{learning_rate, gamma, batch_size, target_update, max_grad_norm};
}

DqnModel::DqnModel(MlpShape shape, const ModelHyper& hyper, std::size_t horizon_episodes,
                   Rng& rng)
    : online_(shape, rng),
      target_(shape),
      buffer_(hyper.buffer_capacity, shape.input),
      schedule_(hyper.schedule(horizon_episodes)),
      trainer_(hyper.trainer()),
      q_cache_(shape.output) {
  schedule_.validate();
  trainer_.validate();
  sync_target(online_, target_);
}

int DqnModel::act(std::span<const double> state, std::size_t episode, Rng& rng,
                  std::optional<std::size_t> masked) const {
  online_.forward_into(state, q_cache_);
  return select_action(q_cache_, schedule_.at(episode), rng, masked);
}

std::optional<double> DqnModel::learn(Rng& rng) {
  auto batch = buffer_.sample(trainer_.batch_size, rng);
  if (!batch) return std::nullopt;
  const double loss = train_step(online_, target_, *batch, trainer_, scratch_);
  if (++train_steps_ % trainer_.target_update_interval == 0) sync_target(online_, target_);
  return loss;
}

}  // namespace ipd
