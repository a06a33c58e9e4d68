#include "ipd/agents.hpp"

#include <string>
#include <utility>

#include "ipd/errors.hpp"

namespace ipd {

std::string_view to_string(RepSources s) {
  switch (s) {
    case RepSources::PlayOnly: return "play";
    case RepSources::PunishOnly: return "punish";
    case RepSources::Both: return "both";
  }
  return "both";
}

RepSources parse_rep_sources(std::string_view s) {
  if (s == "play") return RepSources::PlayOnly;
  if (s == "punish") return RepSources::PunishOnly;
  if (s == "both") return RepSources::Both;
  throw ConfigError("unknown reputation source '" + std::string(s) + "' (play|punish|both)");
}

std::string_view to_string(RepScaling s) {
  return s == RepScaling::Raw ? "raw" : "per-episode";
}

RepScaling parse_rep_scaling(std::string_view s) {
  if (s == "raw") return RepScaling::Raw;
  if (s == "per-episode") return RepScaling::PerEpisode;
  throw ConfigError("unknown reputation scaling '" + std::string(s) + "' (raw|per-episode)");
}

double reputation_scale(const StateEncodingConfig& cfg, std::size_t episode) {
  if (cfg.rep_scaling == RepScaling::Raw) return 1.0;
  return 1.0 / static_cast<double>(episode + 1);
}

std::vector<double> encode_select_state(std::span<const Reputation> reputations, double scale) {
  std::vector<double> s(reputations.size());
  for (std::size_t i = 0; i < reputations.size(); ++i)
    s[i] = static_cast<double>(reputations[i]) * scale;
  return s;
}

std::vector<double> encode_play_state(const StateEncodingConfig& cfg, Action self_prev,
                                      Action partner_prev, Reputation self_rep,
                                      Reputation partner_rep, double scale) {
  const auto a = static_cast<double>(to_index(self_prev));
  const auto b = static_cast<double>(to_index(partner_prev));
  if (!cfg.rep_in_play_state) return {a, b};
  return {static_cast<double>(self_rep) * scale, static_cast<double>(partner_rep) * scale, a, b};
}

std::vector<double> encode_punish_state(Action target_action, Action target_partner_action) {
  return {static_cast<double>(to_index(target_action)),
          static_cast<double>(to_index(target_partner_action))};
}

std::vector<double> encode_punish_state(const StateEncodingConfig& cfg, Action target_action,
                                        Action target_partner_action, Reputation target_rep,
                                        Reputation target_partner_rep, double scale) {
  auto s = encode_punish_state(target_action, target_partner_action);
  if (cfg.rep_in_punish_state) {
    s.push_back(static_cast<double>(target_rep) * scale);
    s.push_back(static_cast<double>(target_partner_rep) * scale);
  }
  return s;
}

AgentBrain AgentBrain::create(const BrainSpec& spec, Rng& rng) {
  if (spec.population < 2) throw ConfigError("population must have at least two agents");
  // Construction order fixes the RNG stream used for weight initialisation.
  std::optional<DqnModel> select;
  if (spec.selection)
    select.emplace(MlpShape{spec.population, spec.hidden, spec.population}, spec.select_hyper,
                   spec.horizon_episodes, rng);
  DqnModel play(MlpShape{spec.encoding.play_dim(), spec.hidden, 2}, spec.play_hyper,
                spec.horizon_episodes, rng);
  std::optional<DqnModel> punish;
  if (spec.punishment)
    punish.emplace(MlpShape{spec.encoding.punish_dim(), spec.hidden, 2}, spec.punish_hyper,
                   spec.horizon_episodes, rng);
  return AgentBrain{std::move(select), std::move(play), std::move(punish)};
}

bool AgentBrain::has(Ability a) const {
  switch (a) {
    case Ability::Select: return select.has_value();
    case Ability::Play: return true;
    case Ability::Punish: return punish.has_value();
  }
  return false;
}

DqnModel& AgentBrain::model(Ability a) {
  return const_cast<DqnModel&>(std::as_const(*this).model(a));
}

const DqnModel& AgentBrain::model(Ability a) const {
  switch (a) {
    case Ability::Select:
      if (!select) throw ConfigError("agent has no partner-selection model");
      return *select;
    case Ability::Play: return play;
    case Ability::Punish:
      if (!punish) throw ConfigError("agent has no punishment model");
      return *punish;
  }
  throw ConfigError("unknown ability");
}

int decide(const AgentBrain& brain, Ability ability, std::span<const double> state,
           std::size_t episode, Rng& rng, std::optional<AgentId> self_index) {
  const DqnModel& m = brain.model(ability);
  if (ability == Ability::Select) {
    if (!self_index) throw InvalidInput("partner selection requires the selector's index");
    return m.act(state, episode, rng, *self_index);
  }
  return m.act(state, episode, rng);
}

}  // namespace ipd
