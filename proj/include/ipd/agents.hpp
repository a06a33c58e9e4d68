#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ipd/dqn.hpp"
#include "ipd/game.hpp"

namespace ipd {

using AgentId = std::size_t;

enum class Ability { Select, Play, Punish };

// Which behaviours feed the reputation tally.
enum class RepSources { PlayOnly, PunishOnly, Both };

// How raw reputations are scaled before they reach a network input.
enum class RepScaling { Raw, PerEpisode };

std::string_view to_string(RepSources s);
RepSources parse_rep_sources(std::string_view s);  // "play", "punish", "both"
std::string_view to_string(RepScaling s);
RepScaling parse_rep_scaling(std::string_view s);  // "raw", "per-episode"

struct StateEncodingConfig {
  bool rep_in_play_state = false;
  bool rep_in_punish_state = false;
  RepSources rep_sources = RepSources::Both;
  // Raw tallies grow linearly with the episode count and destabilise plain SGD.
  RepScaling rep_scaling = RepScaling::PerEpisode;

  std::size_t play_dim() const { return rep_in_play_state ? 4 : 2; }
  std::size_t punish_dim() const { return rep_in_punish_state ? 4 : 2; }
  bool play_changes_reputation() const { return rep_sources != RepSources::PunishOnly; }
  bool punish_changes_reputation() const { return rep_sources != RepSources::PlayOnly; }
};

// Multiplier applied to reputations fed to networks during `episode`.
double reputation_scale(const StateEncodingConfig& cfg, std::size_t episode);

// All reputations in agent-index order (own entry included).
std::vector<double> encode_select_state(std::span<const Reputation> reputations,
                                        double scale = 1.0);

// [self_prev, partner_prev] or [self_rep, partner_rep, self_prev, partner_prev].
std::vector<double> encode_play_state(const StateEncodingConfig& cfg, Action self_prev,
                                      Action partner_prev, Reputation self_rep,
                                      Reputation partner_rep, double scale = 1.0);

// [target_action, target_partner_action]; with reputation in the punish state,
// [target_action, target_partner_action, target_rep, target_partner_rep].
std::vector<double> encode_punish_state(Action target_action, Action target_partner_action);
std::vector<double> encode_punish_state(const StateEncodingConfig& cfg, Action target_action,
                                        Action target_partner_action, Reputation target_rep,
                                        Reputation target_partner_rep, double scale = 1.0);

struct BrainSpec {
  std::size_t population = 5;
  bool selection = false;
  bool punishment = false;
  StateEncodingConfig encoding;
  std::size_t hidden = 128;
  std::size_t horizon_episodes = 2000;
  ModelHyper select_hyper = ModelHyper::selection();
  ModelHyper play_hyper = ModelHyper::playing();
  ModelHyper punish_hyper = ModelHyper::punishing();
};

// Up to three independent models; one punish model serves both punishment kinds.
struct AgentBrain {
  std::optional<DqnModel> select;
  DqnModel play;
  std::optional<DqnModel> punish;

  static AgentBrain create(const BrainSpec& spec, Rng& rng);

  bool has(Ability a) const;
  DqnModel& model(Ability a);  // throws ConfigError when absent
  const DqnModel& model(Ability a) const;
};

// epsilon-greedy decision for one ability. For Select, self_index is masked out.
int decide(const AgentBrain& brain, Ability ability, std::span<const double> state,
           std::size_t episode, Rng& rng, std::optional<AgentId> self_index = std::nullopt);

}  // namespace ipd
