#pragma once

#include <cstdint>
#include <string_view>
#include <utility>

namespace ipd {

// Numeric encodings are fed directly into network inputs and outputs.
enum class Action : std::uint8_t { Cooperate = 0, Defect = 1 };
enum class PunishDecision : std::uint8_t { NoPunish = 0, Punish = 1 };
enum class Justness : std::uint8_t { Just, Unjust };

using Reputation = std::int64_t;

inline constexpr int to_index(Action a) { return static_cast<int>(a); }
inline constexpr int to_index(PunishDecision d) { return static_cast<int>(d); }
inline constexpr Action action_from_index(int i) { return i == 0 ? Action::Cooperate : Action::Defect; }
inline constexpr PunishDecision decision_from_index(int i) {
  return i == 0 ? PunishDecision::NoPunish : PunishDecision::Punish;
}

std::string_view to_string(Action a);

enum class SchemeId : std::uint8_t { Scheme1 = 1, Scheme2 = 2 };

// Reward and reputation accounting for the punishment stage.
struct RewardScheme {
  SchemeId id = SchemeId::Scheme2;
  double punisher_cost = 10.0;
  double punished_penalty = 3.0;
  double just_bonus = 12.0;
  Reputation just_rep_delta = 2;
  Reputation unjust_rep_delta = -3;
  Reputation coop_rep_delta = 1;
  Reputation defect_rep_delta = -1;

  static RewardScheme scheme1();
  static RewardScheme scheme2();
  static RewardScheme from_id(SchemeId id);
  static RewardScheme from_number(int n);  // throws ConfigError unless n is 1 or 2

  int number() const { return static_cast<int>(id); }
  // Net reward to a punisher for punishing a defector.
  double just_net() const { return just_bonus - punisher_cost; }
};

// 2x2 symmetric dilemma; defaults are the standard T=4, R=3, P=1, S=0 values.
struct PayoffMatrix {
  double reward = 3.0;
  double sucker = 0.0;
  double temptation = 4.0;
  double punishment = 1.0;

  std::pair<double, double> operator()(Action row, Action col) const;
};

std::pair<double, double> payoff(Action row, Action col);

Reputation play_reputation_delta(Action a, const RewardScheme& scheme = RewardScheme{});

Justness classify_punishment(Action target_action);

struct PunishmentDeltas {
  double punisher_reward = 0.0;
  double punished_reward = 0.0;
  Reputation punisher_rep = 0;

  friend bool operator==(const PunishmentDeltas&, const PunishmentDeltas&) = default;
};

// The punished agent's reputation is never touched here; only the punisher's.
PunishmentDeltas punishment_deltas(const RewardScheme& scheme, PunishDecision decision,
                                   Action target_action);

}  // namespace ipd
