#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ipd/kernels.hpp"
#include "ipd/mlp.hpp"

namespace ipd {

struct Transition {
  std::vector<double> state;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_state;  // ignored (may be empty) when terminal
  bool terminal = false;
};

// Structure-of-arrays view of sampled transitions.
struct Batch {
  std::size_t state_dim = 0;
  std::vector<double> states;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<double> next_states;
  std::vector<std::uint8_t> terminal;

  std::size_t size() const { return actions.size(); }
  Transition at(std::size_t i) const;
  static Batch from(std::span<const Transition> ts);
};

// Bounded FIFO of transitions; once full, each push evicts the oldest entry.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t state_dim);

  void push(const Transition& t);
  std::size_t size() const { return count_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t state_dim() const { return state_dim_; }
  bool empty() const { return count_ == 0; }

  // i = 0 is the oldest stored transition.
  Transition at(std::size_t i) const;

  // Uniform with replacement. nullopt when fewer than batch_size transitions are stored.
  std::optional<Batch> sample(std::size_t batch_size, Rng& rng) const;

 private:
  std::size_t slot(std::size_t i) const { return (head_ + i) % capacity_; }
  void copy_into(std::size_t physical, Batch& b) const;

  std::size_t capacity_;
  std::size_t state_dim_;
  std::size_t head_ = 0;  // physical index of the oldest entry
  std::size_t count_ = 0;
  std::vector<double> states_, next_states_, rewards_;
  std::vector<int> actions_;
  std::vector<std::uint8_t> terminal_;
};

// Linear anneal from eps_max to eps_min over the first decay_fraction * horizon
// episodes, then flat at eps_min.
struct EpsilonSchedule {
  double eps_max = 0.8889;
  double eps_min = 0.01;
  double decay_fraction = 0.3;
  std::size_t horizon_episodes = 2000;

  double at(std::size_t episode) const;
  void validate() const;
};

struct TrainerConfig {
  double learning_rate = 0.1;
  double gamma = 0.9;
  std::size_t batch_size = 100;
  std::size_t target_update_interval = 200;  // counted in train steps
  double max_grad_norm = 0.0;                // <= 0 disables clipping

  void validate() const;
};

// epsilon-greedy over qvalues; argmax ties go to the lowest index. A masked index is
// never returned, neither greedily nor by exploration.
int select_action(std::span<const double> qvalues, double epsilon, Rng& rng,
                  std::optional<std::size_t> masked = std::nullopt);

struct TrainScratch {
  kernels::Workspace online, target;
  MlpParams grad;
  std::vector<double> td_targets;
};

// TD targets y = r (terminal) or r + gamma * max_a' Q_target(s', a').
void td_targets(const QNetwork& target_net, const Batch& batch, double gamma,
                std::vector<double>& out, kernels::Workspace& ws);

// One SGD step on the mean squared TD error. Returns the loss before the step.
// Throws NumericalFailure when the loss or gradient is not finite.
double train_step(QNetwork& net, const QNetwork& target_net, const Batch& batch,
                  const TrainerConfig& cfg, TrainScratch& scratch);
double train_step(QNetwork& net, const QNetwork& target_net, const Batch& batch,
                  const TrainerConfig& cfg);

// Per-ability hyper-parameters shared by all agents.
struct ModelHyper {
  double eps_max = 0.8889;
  double eps_min = 0.01;
  double eps_decay = 0.3;  // decay_fraction of the run's episodes
  double learning_rate = 0.1;
  std::size_t buffer_capacity = 131072;
  double gamma = 0.9;
  std::size_t batch_size = 100;
  std::size_t target_update = 200;
  double max_grad_norm = 10.0;  // global-norm clip; keeps large TD errors from diverging

  static ModelHyper selection();
  static ModelHyper playing();
  static ModelHyper punishing();

  EpsilonSchedule schedule(std::size_t horizon_episodes) const;
  TrainerConfig trainer() const;
};

// Online net, target net, replay buffer and schedules for one agent ability.
class DqnModel {
 public:
  DqnModel(MlpShape shape, const ModelHyper& hyper, std::size_t horizon_episodes, Rng& rng);

  int act(std::span<const double> state, std::size_t episode, Rng& rng,
          std::optional<std::size_t> masked = std::nullopt) const;
  void remember(const Transition& t) { buffer_.push(t); }
  // Samples a batch and trains once; nullopt when the buffer is still too small.
  std::optional<double> learn(Rng& rng);

  const QNetwork& online() const { return online_; }
  QNetwork& online() { return online_; }
  const QNetwork& target() const { return target_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const EpsilonSchedule& schedule() const { return schedule_; }
  const TrainerConfig& trainer() const { return trainer_; }
  std::size_t train_steps() const { return train_steps_; }

 private:
  QNetwork online_;
  QNetwork target_;
  ReplayBuffer buffer_;
  EpsilonSchedule schedule_;
  TrainerConfig trainer_;
  std::size_t train_steps_ = 0;
  TrainScratch scratch_;
  mutable std::vector<double> q_cache_;
};

}  // namespace ipd
