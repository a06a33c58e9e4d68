#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "ipd/agents.hpp"
#include "ipd/game.hpp"
#include "ipd/mechanism.hpp"

namespace ipd {

struct Pairing {
  AgentId selector = 0;
  AgentId partner = 0;

  friend bool operator==(const Pairing&, const Pairing&) = default;
};

enum class PunishKind : std::uint8_t { Direct, ThirdParty };

struct PunishmentAssignment {
  AgentId punisher = 0;
  AgentId target = 0;
  PunishKind kind = PunishKind::Direct;

  friend bool operator==(const PunishmentAssignment&, const PunishmentAssignment&) = default;
};

struct PunishEvent {
  PunishmentAssignment assignment;
  Action target_action = Action::Cooperate;
  PunishDecision decision = PunishDecision::NoPunish;
  Justness justness = Justness::Unjust;
  PunishmentDeltas deltas;
  Reputation rep_applied = 0;  // punisher reputation change actually applied
};

// One pairing in one round. Index 0 is the selector, 1 the partner.
struct RoundLog {
  std::size_t round = 0;
  std::size_t pairing_index = 0;
  Pairing pairing;
  std::array<Action, 2> actions{};
  std::array<double, 2> payoffs{};
  std::array<Reputation, 2> play_rep_applied{};
  std::vector<PunishEvent> punishments;
};

struct EpisodeLog {
  std::size_t episode = 0;
  Mode mode = Mode::DP;
  std::size_t population = 0;
  std::vector<Pairing> pairings;
  std::vector<RoundLog> rounds;
  std::vector<double> agent_reward;            // total reward per agent this episode
  std::vector<Reputation> reputations_start;   // at stage 1
  std::vector<Reputation> reputations_end;
  std::size_t punish_opportunities = 0;
};

}  // namespace ipd
