#include "ipd/mechanism.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "ipd/errors.hpp"

namespace ipd {

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::DP: return "DP";
    case Mode::DP_S: return "DP-S";
    case Mode::TPP: return "TPP";
    case Mode::TPP_S: return "TPP-S";
    case Mode::TPPDP: return "TPPDP";
    case Mode::TPPDP_S: return "TPPDP-S";
    case Mode::NONE: return "NONE";
  }
  return "NONE";
}

Mode parse_mode(std::string_view s) {
  std::string norm(s);
  std::transform(norm.begin(), norm.end(), norm.begin(), [](unsigned char c) {
    return c == '_' ? '-' : static_cast<char>(std::toupper(c));
  });
  for (Mode m : {Mode::DP, Mode::DP_S, Mode::TPP, Mode::TPP_S, Mode::TPPDP, Mode::TPPDP_S,
                 Mode::NONE})
    if (norm == to_string(m)) return m;
  throw ConfigError("unknown mode '" + std::string(s) +
                    "' (DP, DP-S, TPP, TPP-S, TPPDP, TPPDP-S, NONE)");
}

bool has_selection(Mode m) {
  return m == Mode::DP_S || m == Mode::TPP_S || m == Mode::TPPDP_S;
}

bool has_direct(Mode m) {
  return m == Mode::DP || m == Mode::DP_S || m == Mode::TPPDP || m == Mode::TPPDP_S;
}

bool has_third_party(Mode m) {
  return m == Mode::TPP || m == Mode::TPP_S || m == Mode::TPPDP || m == Mode::TPPDP_S;
}

std::size_t opportunities_per_pairing(Mode m) {
  return (has_direct(m) ? 2 : 0) + (has_third_party(m) ? 2 : 0);
}

StateEncodingConfig default_encoding(Mode m) {
  StateEncodingConfig e;
  e.rep_in_play_state = has_third_party(m);
  return e;
}

MechanismConfig MechanismConfig::for_mode(Mode m) {
  MechanismConfig c;
  c.mode = m;
  c.encoding = default_encoding(m);
  return c;
}

void MechanismConfig::validate() const {
  if (population < 2) throw ConfigError("population size must be at least 2");
  if (has_third_party(mode) && population < 4)
    throw ConfigError("third-party punishment needs a population of at least 4 (got " +
                      std::to_string(population) + ")");
  if (episodes == 0) throw ConfigError("episodes must be positive");
  if (rounds == 0) throw ConfigError("rounds per episode must be positive");
  if (hidden == 0) throw ConfigError("hidden layer width must be positive");
  for (const auto* h : {&select_hyper, &play_hyper, &punish_hyper}) {
    h->schedule(episodes).validate();
    h->trainer().validate();
    if (h->buffer_capacity == 0) throw ConfigError("replay buffer capacity must be positive");
  }
}

BrainSpec MechanismConfig::brain_spec() const {
  BrainSpec b;
  b.population = population;
  b.selection = has_selection(mode);
  b.punishment = has_punishment(mode);
  b.encoding = encoding;
  b.hidden = hidden;
  b.horizon_episodes = episodes;
  b.select_hyper = select_hyper;
  b.play_hyper = play_hyper;
  b.punish_hyper = punish_hyper;
  return b;
}

}  // namespace ipd
