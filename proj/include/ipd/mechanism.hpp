#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

#include "ipd/agents.hpp"
#include "ipd/dqn.hpp"
#include "ipd/game.hpp"

namespace ipd {

// Active combination of social mechanisms. A trailing _S adds partner selection.
enum class Mode : std::uint8_t { DP, DP_S, TPP, TPP_S, TPPDP, TPPDP_S, NONE };

inline constexpr std::array<Mode, 6> kMainModes{Mode::TPP_S, Mode::TPP, Mode::DP_S,
                                                Mode::DP,    Mode::TPPDP_S, Mode::TPPDP};

std::string_view to_string(Mode m);  // "DP-S", "TPPDP", "NONE", ...
Mode parse_mode(std::string_view s);  // accepts "DP-S", "DP_S", "dp-s"

bool has_selection(Mode m);
bool has_direct(Mode m);
bool has_third_party(Mode m);
inline bool has_punishment(Mode m) { return has_direct(m) || has_third_party(m); }
// Punishment opportunities generated by one pairing in one round: 2, 2, 4 or 0.
std::size_t opportunities_per_pairing(Mode m);

// Reputation is part of the play state for third-party modes only.
StateEncodingConfig default_encoding(Mode m);

struct MechanismConfig {
  Mode mode = Mode::DP;
  RewardScheme scheme = RewardScheme::scheme2();
  std::size_t population = 5;
  std::size_t episodes = 2000;
  std::size_t rounds = 10;
  StateEncodingConfig encoding = default_encoding(Mode::DP);
  std::size_t hidden = 128;
  std::uint64_t seed = 0;
  ModelHyper select_hyper = ModelHyper::selection();
  ModelHyper play_hyper = ModelHyper::playing();
  ModelHyper punish_hyper = ModelHyper::punishing();
  bool learning = true;  // false freezes every network (used for rigged tests)

  static MechanismConfig for_mode(Mode m);

  // Throws ConfigError on an inconsistent configuration.
  void validate() const;
  BrainSpec brain_spec() const;
};

}  // namespace ipd
