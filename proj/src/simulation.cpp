#include "ipd/simulation.hpp"

#include <algorithm>
#include <string>
#include <utility>

#include "ipd/errors.hpp"

namespace ipd {

std::vector<Pairing> pair_agents(const MechanismConfig& cfg, std::span<const AgentBrain> brains,
                                 std::span<const Reputation> reputations, std::size_t episode,
                                 Rng& rng) {
  const std::size_t n = cfg.population;
  if (n < 2) throw ConfigError("pairing needs at least two agents");
  std::vector<Pairing> out;
  out.reserve(n);
  if (has_selection(cfg.mode)) {
    if (brains.size() != n || reputations.size() != n)
      throw InvalidInput("pair_agents: brains/reputations do not match population size");
    const auto state = encode_select_state(reputations, reputation_scale(cfg.encoding, episode));
    for (AgentId i = 0; i < n; ++i) {
      const int choice = decide(brains[i], Ability::Select, state, episode, rng, i);
      out.push_back({i, static_cast<AgentId>(choice)});
    }
    return out;
  }
  std::uniform_int_distribution<std::size_t> pick(0, n - 2);
  for (AgentId i = 0; i < n; ++i) {
    std::size_t j = pick(rng);
    if (j >= i) ++j;
    out.push_back({i, j});
  }
  return out;
}

std::vector<PunishmentAssignment> assign_punishers(const MechanismConfig& cfg,
                                                   const Pairing& pairing, Rng& rng) {
  std::vector<PunishmentAssignment> out;
  if (has_direct(cfg.mode)) {
    out.push_back({pairing.partner, pairing.selector, PunishKind::Direct});
    out.push_back({pairing.selector, pairing.partner, PunishKind::Direct});
  }
  if (has_third_party(cfg.mode)) {
    if (cfg.population < 4)
      throw ConfigError("third-party punishment needs a population of at least 4");
    const std::size_t outsiders = cfg.population - 2;
    // Map an index in [0, outsiders) onto agent ids, skipping both interactants.
    const AgentId lo = std::min(pairing.selector, pairing.partner);
    const AgentId hi = std::max(pairing.selector, pairing.partner);
    auto outsider = [&](std::size_t k) {
      AgentId id = k;
      if (id >= lo) ++id;
      if (id >= hi) ++id;
      return id;
    };
    std::uniform_int_distribution<std::size_t> first(0, outsiders - 1);
    std::uniform_int_distribution<std::size_t> second(0, outsiders - 2);
    const std::size_t p = first(rng);
    std::size_t k = second(rng);
    if (k >= p) ++k;
    out.push_back({outsider(p), pairing.selector, PunishKind::ThirdParty});
    out.push_back({outsider(k), pairing.partner, PunishKind::ThirdParty});
  }
  return out;
}

Simulation::Simulation(MechanismConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {
  cfg_.validate();
  const BrainSpec spec = cfg_.brain_spec();
  brains_.reserve(cfg_.population);
  for (std::size_t i = 0; i < cfg_.population; ++i) brains_.push_back(AgentBrain::create(spec, rng_));
  reputations_.assign(cfg_.population, 0);
  pending_punish_.resize(cfg_.population);
}

void Simulation::begin_episode(std::size_t episode, EpisodeLog& log) {
  log = EpisodeLog{};
  log.episode = episode;
  log.mode = cfg_.mode;
  log.population = cfg_.population;
  log.agent_reward.assign(cfg_.population, 0.0);
  log.reputations_start = reputations_;
  log.pairings = pair_agents(cfg_, brains_, reputations_, episode, rng_);
  log.rounds.reserve(log.pairings.size() * cfg_.rounds);
  prev_actions_.assign(log.pairings.size(), {Action::Cooperate, Action::Cooperate});
  for (auto& p : pending_punish_) p.reset();
  if (has_selection(cfg_.mode)) {
    select_states_.assign(1, encode_select_state(reputations_,
                                                 reputation_scale(cfg_.encoding, episode)));
    select_actions_.clear();
    for (const auto& p : log.pairings) select_actions_.push_back(static_cast<int>(p.partner));
  }
}

void Simulation::run_round(std::size_t episode, std::size_t round, EpisodeLog& log) {
  const auto& enc = cfg_.encoding;
  const auto& pairings = log.pairings;
  const std::size_t npair = pairings.size();
  const double scale = reputation_scale(enc, episode);
  const std::vector<Reputation> reps = reputations_;  // decisions see round-start values

  // Stage 2 decisions.
  std::vector<std::array<std::vector<double>, 2>> play_states(npair);
  std::vector<std::array<Action, 2>> acts(npair);
  for (std::size_t p = 0; p < npair; ++p) {
    const std::array<AgentId, 2> who{pairings[p].selector, pairings[p].partner};
    for (std::size_t side = 0; side < 2; ++side) {
      const AgentId me = who[side], other = who[1 - side];
      play_states[p][side] = encode_play_state(enc, prev_actions_[p][side],
                                               prev_actions_[p][1 - side], reps[me], reps[other],
                                               scale);
      acts[p][side] =
          action_from_index(decide(brains_[me], Ability::Play, play_states[p][side], episode, rng_));
    }
  }

  // Stage 3 decisions.
  struct Decided {
    std::size_t pairing;
    PunishEvent event;
    std::vector<double> state;
  };
  std::vector<Decided> decided;
  if (has_punishment(cfg_.mode)) {
    decided.reserve(npair * opportunities_per_pairing(cfg_.mode));
    for (std::size_t p = 0; p < npair; ++p) {
      for (const auto& asg : assign_punishers(cfg_, pairings[p], rng_)) {
        const std::size_t side = asg.target == pairings[p].selector ? 0 : 1;
        const AgentId other = side == 0 ? pairings[p].partner : pairings[p].selector;
        Decided d{p, {}, {}};
        d.event.assignment = asg;
        d.event.target_action = acts[p][side];
        d.state = encode_punish_state(enc, acts[p][side], acts[p][1 - side], reps[asg.target],
                                      reps[other], scale);
        d.event.decision = decision_from_index(
            decide(brains_[asg.punisher], Ability::Punish, d.state, episode, rng_));
        d.event.justness = classify_punishment(d.event.target_action);
        d.event.deltas = punishment_deltas(cfg_.scheme, d.event.decision, d.event.target_action);
        decided.push_back(std::move(d));
      }
    }
  }

  // Deltas.
  const PayoffMatrix matrix;
  std::vector<RoundLog> rlogs(npair);
  std::vector<std::array<double, 2>> penalty(npair, {0.0, 0.0});
  for (std::size_t p = 0; p < npair; ++p) {
    auto& rl = rlogs[p];
    rl.round = round;
    rl.pairing_index = p;
    rl.pairing = pairings[p];
    rl.actions = acts[p];
    const auto [r0, r1] = matrix(acts[p][0], acts[p][1]);
    rl.payoffs = {r0, r1};
    const std::array<AgentId, 2> who{pairings[p].selector, pairings[p].partner};
    for (std::size_t side = 0; side < 2; ++side) {
      log.agent_reward[who[side]] += rl.payoffs[side];
      rl.play_rep_applied[side] =
          enc.play_changes_reputation() ? play_reputation_delta(acts[p][side], cfg_.scheme) : 0;
      reputations_[who[side]] += rl.play_rep_applied[side];
    }
  }
  for (auto& d : decided) {
    auto& ev = d.event;
    const auto& asg = ev.assignment;
    log.agent_reward[asg.punisher] += ev.deltas.punisher_reward;
    log.agent_reward[asg.target] += ev.deltas.punished_reward;
    ev.rep_applied = enc.punish_changes_reputation() ? ev.deltas.punisher_rep : 0;
    reputations_[asg.punisher] += ev.rep_applied;
    const std::size_t side = asg.target == pairings[d.pairing].selector ? 0 : 1;
    penalty[d.pairing][side] += ev.deltas.punished_reward;
    rlogs[d.pairing].punishments.push_back(ev);
  }

  // Transitions.
  const bool last = round + 1 == cfg_.rounds;
  std::vector<char> played(cfg_.population, 0), judged(cfg_.population, 0);
  for (std::size_t p = 0; p < npair; ++p) {
    const std::array<AgentId, 2> who{pairings[p].selector, pairings[p].partner};
    for (std::size_t side = 0; side < 2; ++side) {
      const AgentId me = who[side], other = who[1 - side];
      Transition t;
      t.state = std::move(play_states[p][side]);
      t.action = to_index(acts[p][side]);
      t.reward = rlogs[p].payoffs[side] + penalty[p][side];
      t.terminal = last;
      if (!last)
        t.next_state = encode_play_state(enc, acts[p][side], acts[p][1 - side], reputations_[me],
                                         reputations_[other], scale);
      brains_[me].play.remember(t);
      played[me] = 1;
    }
  }
  for (auto& d : decided) {
    const AgentId who = d.event.assignment.punisher;
    auto& pending = pending_punish_[who];
    if (pending) {
      Transition t{std::move(pending->state), pending->action, pending->reward, d.state, false};
      brains_[who].punish->remember(t);
    }
    pending = PendingPunish{std::move(d.state), to_index(d.event.decision),
                            d.event.deltas.punisher_reward};
    judged[who] = 1;
  }

  for (auto& rl : rlogs) log.rounds.push_back(std::move(rl));
  log.punish_opportunities += decided.size();
  for (std::size_t p = 0; p < npair; ++p) prev_actions_[p] = acts[p];

  if (!cfg_.learning) return;
  for (AgentId i = 0; i < cfg_.population; ++i) {
    if (played[i]) brains_[i].play.learn(rng_);
    if (judged[i]) brains_[i].punish->learn(rng_);
  }
}

void Simulation::end_episode(std::size_t episode, EpisodeLog& log) {
  for (AgentId i = 0; i < cfg_.population; ++i) {
    auto& pending = pending_punish_[i];
    if (!pending) continue;
    brains_[i].punish->remember(
        Transition{std::move(pending->state), pending->action, pending->reward, {}, true});
    pending.reset();
  }
  if (has_selection(cfg_.mode)) {
    const auto next =
        encode_select_state(reputations_, reputation_scale(cfg_.encoding, episode + 1));
    for (AgentId i = 0; i < cfg_.population; ++i) {
      brains_[i].select->remember(
          Transition{select_states_.front(), select_actions_[i], log.agent_reward[i], next, false});
      if (cfg_.learning) brains_[i].select->learn(rng_);
    }
  }
  log.reputations_end = reputations_;
}

EpisodeLog Simulation::run_episode(std::size_t episode) {
  EpisodeLog log;
  begin_episode(episode, log);
  for (std::size_t r = 0; r < cfg_.rounds; ++r) run_round(episode, r, log);
  end_episode(episode, log);
  return log;
}

namespace {

nlohmann::json model_json(const DqnModel& m) {
  const auto& p = m.online().params();
  return {{"input", p.shape.input},     {"hidden", p.shape.hidden},
          {"output", p.shape.output},   {"train_steps", m.train_steps()},
          {"buffer_size", m.buffer().size()},
          {"w1", p.w1},                 {"b1", p.b1},
          {"w2", p.w2},                 {"b2", p.b2}};
}

}  // namespace

nlohmann::json Simulation::snapshot() const {
  nlohmann::json j;
  j["mode"] = std::string(to_string(cfg_.mode));
  j["scheme"] = cfg_.scheme.number();
  j["population"] = cfg_.population;
  j["seed"] = cfg_.seed;
  j["reputations"] = reputations_;
  auto& agents = j["agents"] = nlohmann::json::array();
  for (const auto& b : brains_) {
    nlohmann::json a;
    if (b.select) a["select"] = model_json(*b.select);
    a["play"] = model_json(b.play);
    if (b.punish) a["punish"] = model_json(*b.punish);
    agents.push_back(std::move(a));
  }
  return j;
}

SimulationFailure::SimulationFailure(const std::string& what, std::size_t episode,
                                     nlohmann::json snapshot)
    : NumericalFailure(what), episode_(episode), snapshot_(std::move(snapshot)) {}

SimulationResult run_simulation(const MechanismConfig& cfg, const EpisodeCallback& on_episode) {
  Simulation sim(cfg);
  SimulationResult result;
  result.metrics.reserve(cfg.episodes);
  std::optional<EpisodeLog> prev;
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    EpisodeLog log;
    try {
      log = sim.run_episode(e);
    } catch (const NumericalFailure& err) {
      throw SimulationFailure(err.what(), e, sim.snapshot());
    }
    result.metrics.push_back(episode_metrics(log, prev ? &*prev : nullptr));
    if (on_episode) on_episode(log, result.metrics.back());
    prev = std::move(log);
  }
  result.snapshot = sim.snapshot();
  return result;
}

}  // namespace ipd
