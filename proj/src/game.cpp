#include "ipd/game.hpp"

#include "ipd/errors.hpp"

namespace ipd {

std::string_view to_string(Action a) { return a == Action::Cooperate ? "C" : "D"; }

RewardScheme RewardScheme::scheme1() {
  RewardScheme s;
  s.id = SchemeId::Scheme1;
  s.just_bonus = 7.0;
  return s;
}

RewardScheme RewardScheme::scheme2() {
  RewardScheme s;
  s.id = SchemeId::Scheme2;
  s.just_bonus = 12.0;
  return s;
}

RewardScheme RewardScheme::from_id(SchemeId id) {
  return id == SchemeId::Scheme1 ? scheme1() : scheme2();
}

RewardScheme RewardScheme::from_number(int n) {
  if (n == 1) return scheme1();
  if (n == 2) return scheme2();
  throw ConfigError("reward scheme must be 1 or 2, got " + std::to_string(n));
}

std::pair<double, double> PayoffMatrix::operator()(Action row, Action col) const {
  if (row == Action::Cooperate) {
    return col == Action::Cooperate ? std::pair{reward, reward} : std::pair{sucker, temptation};
  }
  return col == Action::Cooperate ? std::pair{temptation, sucker}
                                  : std::pair{punishment, punishment};
}

std::pair<double, double> payoff(Action row, Action col) { return PayoffMatrix{}(row, col); }

Reputation play_reputation_delta(Action a, const RewardScheme& scheme) {
  return a == Action::Cooperate ? scheme.coop_rep_delta : scheme.defect_rep_delta;
}

Justness classify_punishment(Action target_action) {
  return target_action == Action::Defect ? Justness::Just : Justness::Unjust;
}

PunishmentDeltas punishment_deltas(const RewardScheme& scheme, PunishDecision decision,
                                   Action target_action) {
  if (decision == PunishDecision::NoPunish) return {};
  PunishmentDeltas d;
  d.punished_reward = -scheme.punished_penalty;
  if (classify_punishment(target_action) == Justness::Just) {
    d.punisher_reward = scheme.just_bonus - scheme.punisher_cost;
    d.punisher_rep = scheme.just_rep_delta;
  } else {
    d.punisher_reward = -scheme.punisher_cost;
    d.punisher_rep = scheme.unjust_rep_delta;
  }
  return d;
}

}  // namespace ipd
