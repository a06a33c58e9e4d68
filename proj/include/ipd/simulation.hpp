#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipd/agents.hpp"
#include "ipd/episode_log.hpp"
#include "ipd/errors.hpp"
#include "ipd/mechanism.hpp"
#include "ipd/metrics.hpp"

namespace ipd {

// Stage 1. Selection modes: each agent's select model picks a partner from the current
// reputations (self masked). Otherwise each partner is uniform over the other N-1 agents.
std::vector<Pairing> pair_agents(const MechanismConfig& cfg, std::span<const AgentBrain> brains,
                                 std::span<const Reputation> reputations, std::size_t episode,
                                 Rng& rng);

// Stage 3 assignments for one pairing: direct ones first (partner judges selector, then
// selector judges partner), then two distinct third parties P (judges selector) and K
// (judges partner).
std::vector<PunishmentAssignment> assign_punishers(const MechanismConfig& cfg,
                                                   const Pairing& pairing, Rng& rng);

class Simulation {
 public:
  explicit Simulation(MechanismConfig cfg);

  const MechanismConfig& config() const { return cfg_; }
  std::vector<AgentBrain>& brains() { return brains_; }
  const std::vector<AgentBrain>& brains() const { return brains_; }
  std::span<const Reputation> reputations() const { return reputations_; }
  std::vector<Reputation>& mutable_reputations() { return reputations_; }
  Rng& rng() { return rng_; }

  // Starts an episode: fixes pairings and resets per-pairing history.
  void begin_episode(std::size_t episode, EpisodeLog& log);
  // Stages 2 and 3 for every pairing, then transitions and one train step per model
  // that acted.
  void run_round(std::size_t episode, std::size_t round, EpisodeLog& log);
  // Flushes pending transitions and trains the selection models.
  void end_episode(std::size_t episode, EpisodeLog& log);

  EpisodeLog run_episode(std::size_t episode);

  nlohmann::json snapshot() const;

 private:
  struct PendingPunish {
    std::vector<double> state;
    int action = 0;
    double reward = 0.0;
  };

  MechanismConfig cfg_;
  Rng rng_;
  std::vector<AgentBrain> brains_;
  std::vector<Reputation> reputations_;
  std::vector<std::array<Action, 2>> prev_actions_;  // per pairing, this episode
  std::vector<std::optional<PendingPunish>> pending_punish_;
  std::vector<std::vector<double>> select_states_;
  std::vector<int> select_actions_;
};

// A numerical failure raised mid-run, carrying the model state at that point.
class SimulationFailure : public NumericalFailure {
 public:
  SimulationFailure(const std::string& what, std::size_t episode, nlohmann::json snapshot);
  std::size_t episode() const { return episode_; }
  const nlohmann::json& snapshot() const { return snapshot_; }

 private:
  std::size_t episode_;
  nlohmann::json snapshot_;
};

struct SimulationResult {
  std::vector<EpisodeMetrics> metrics;
  nlohmann::json snapshot;
};

using EpisodeCallback = std::function<void(const EpisodeLog&, const EpisodeMetrics&)>;

// Deterministic under cfg (including cfg.seed).
SimulationResult run_simulation(const MechanismConfig& cfg,
                                const EpisodeCallback& on_episode = {});

}  // namespace ipd
