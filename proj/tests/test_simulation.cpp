#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "ipd/errors.hpp"
#include "ipd/metrics.hpp"
#include "ipd/simulation.hpp"

using namespace ipd;

namespace {

constexpr std::array<Mode, 7> kAllModes{Mode::DP,    Mode::DP_S,    Mode::TPP, Mode::TPP_S,
                                        Mode::TPPDP, Mode::TPPDP_S, Mode::NONE};

MechanismConfig small(Mode m, std::uint64_t seed = 1) {
  auto c = MechanismConfig::for_mode(m);
  c.hidden = 16;
  c.episodes = 30;
  c.seed = seed;
  return c;
}

// Greedy, frozen population so decisions can be rigged through the output biases.
MechanismConfig rigged(Mode m, std::size_t n, std::size_t rounds) {
  auto c = MechanismConfig::for_mode(m);
  c.population = n;
  c.rounds = rounds;
  c.hidden = 4;
  c.learning = false;
  for (auto* h : {&c.select_hyper, &c.play_hyper, &c.punish_hyper}) h->eps_max = h->eps_min = 0.0;
  return c;
}

void rig_constant(DqnModel& m, std::vector<double> q) {
  m.online().params().fill(0.0);
  m.online().params().b2 = std::move(q);
}

// Punish iff the target (first punish-state input) defected.
void rig_just_punisher(DqnModel& m) {
  auto& p = m.online().params();
  p.fill(0.0);
  const std::size_t H = p.shape.hidden;
  p.w1[0 * H + 0] = 1.0;  // hidden unit 0 = relu(target_action)
  p.w2[1 * H + 0] = 1.0;  // Q(punish) = target_action
  p.b2 = {0.5, 0.0};      // Q(no punish) = 0.5
}

}  // namespace

TEST_CASE("no self-pairing in 1e5 sampled pairings") {
  Rng rng(17);
  std::size_t sampled = 0;
  for (Mode m : kAllModes) {
    auto cfg = small(m);
    std::vector<AgentBrain> brains;
    for (std::size_t i = 0; i < cfg.population; ++i) brains.push_back(AgentBrain::create(cfg.brain_spec(), rng));
    std::vector<Reputation> reps(cfg.population, 0);
    std::uniform_int_distribution<int> rep(-20, 20);
    for (int draw = 0; draw < 3000; ++draw) {
      for (auto& r : reps) r = rep(rng);
      const auto pairs = pair_agents(cfg, brains, reps, static_cast<std::size_t>(draw % 40), rng);
      REQUIRE(pairs.size() == cfg.population);
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(pairs[i].selector == i);
        CHECK(pairs[i].partner != pairs[i].selector);
        CHECK(pairs[i].partner < cfg.population);
      }
      sampled += pairs.size();
    }
  }
  CHECK(sampled >= 100000);
}

TEST_CASE("random pairing covers every other agent") {
  Rng rng(2);
  auto cfg = small(Mode::NONE);
  std::map<std::size_t, int> hits;
  for (int i = 0; i < 4000; ++i) hits[pair_agents(cfg, {}, {}, 0, rng)[0].partner]++;
  CHECK(hits.size() == 4);
  CHECK(hits.count(0) == 0);
  for (auto [k, v] : hits) CHECK(v > 850);
}

TEST_CASE("unrestricted re-selection") {
  auto cfg = rigged(Mode::DP_S, 5, 1);
  Simulation sim(cfg);
  for (auto& b : sim.brains()) rig_constant(*b.select, {0, 0, 0, 9, 0});
  EpisodeLog log;
  sim.begin_episode(0, log);
  int chose3 = 0;
  for (const auto& p : log.pairings) chose3 += p.partner == 3;
  CHECK(chose3 == 4);
  CHECK(log.pairings[3].partner != 3);
}

TEST_CASE("punisher assignment") {
  Rng rng(4);
  auto dp = small(Mode::DP);
  const auto a = assign_punishers(dp, {0, 3}, rng);
  REQUIRE(a.size() == 2);
  CHECK(a[0] == PunishmentAssignment{3, 0, PunishKind::Direct});
  CHECK(a[1] == PunishmentAssignment{0, 3, PunishKind::Direct});

  auto tpp = small(Mode::TPP);
  std::set<AgentId> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto t = assign_punishers(tpp, {0, 3}, rng);
    REQUIRE(t.size() == 2);
    CHECK(t[0].target == 0);
    CHECK(t[1].target == 3);
    CHECK(t[0].punisher != t[1].punisher);
    for (const auto& x : t) {
      CHECK(x.kind == PunishKind::ThirdParty);
      CHECK(x.punisher != 0);
      CHECK(x.punisher != 3);
      seen.insert(x.punisher);
    }
  }
  CHECK(seen == std::set<AgentId>{1, 2, 4});

  CHECK(assign_punishers(small(Mode::TPPDP), {1, 2}, rng).size() == 4);
  CHECK(assign_punishers(small(Mode::NONE), {1, 2}, rng).empty());
  auto tiny = small(Mode::TPP);
  tiny.population = 3;
  CHECK_THROWS_AS(assign_punishers(tiny, {0, 1}, rng), ConfigError);
  CHECK_THROWS_AS(Simulation{tiny}, ConfigError);
}

TEST_CASE("structural and accounting invariants hold every episode") {
  for (Mode m : kAllModes) {
    CAPTURE(to_string(m));
    auto cfg = small(m, 3);
    double prev_rep = 0.0;
    std::vector<Reputation> prev_end(cfg.population, 0);
    std::size_t episodes = 0;
    run_simulation(cfg, [&](const EpisodeLog& log, const EpisodeMetrics& met) {
      ++episodes;
      CHECK(log.pairings.size() == cfg.population);
      CHECK(log.rounds.size() == cfg.population * cfg.rounds);
      CHECK(log.reputations_start == prev_end);
      std::map<std::size_t, std::size_t> per_pairing;
      Reputation rep_delta = 0;
      std::vector<double> reward(cfg.population, 0.0);
      std::size_t opportunities = 0;
      for (const auto& r : log.rounds) {
        per_pairing[r.pairing_index]++;
        CHECK(r.pairing == log.pairings[r.pairing_index]);
        CHECK(r.punishments.size() == opportunities_per_pairing(m));
        opportunities += r.punishments.size();
        const AgentId a = r.pairing.selector, b = r.pairing.partner;
        reward[a] += r.payoffs[0];
        reward[b] += r.payoffs[1];
        rep_delta += r.play_rep_applied[0] + r.play_rep_applied[1];
        std::size_t direct = 0, third = 0;
        for (const auto& ev : r.punishments) {
          const auto& asg = ev.assignment;
          CHECK((asg.target == a || asg.target == b));
          if (asg.kind == PunishKind::Direct) {
            ++direct;
            CHECK(asg.punisher == (asg.target == a ? b : a));
          } else {
            ++third;
            CHECK(asg.punisher != a);
            CHECK(asg.punisher != b);
          }
          CHECK(ev.justness == classify_punishment(ev.target_action));
          CHECK(ev.target_action == r.actions[asg.target == a ? 0 : 1]);
          if (ev.decision == PunishDecision::NoPunish) CHECK(ev.deltas == PunishmentDeltas{});
          reward[asg.punisher] += ev.deltas.punisher_reward;
          reward[asg.target] += ev.deltas.punished_reward;
          rep_delta += ev.rep_applied;
        }
        CHECK(direct == (has_direct(m) ? 2u : 0u));
        CHECK(third == (has_third_party(m) ? 2u : 0u));
      }
      for (auto [p, n] : per_pairing) CHECK(n == cfg.rounds);
      CHECK(opportunities == log.punish_opportunities);
      CHECK(opportunities == cfg.population * cfg.rounds * opportunities_per_pairing(m));
      // Societal reward: metric vs the simulation's own per-agent ledger vs the log.
      double ledger = 0.0;
      for (double x : log.agent_reward) ledger += x;
      CHECK(met.societal_reward == ledger);
      for (std::size_t i = 0; i < cfg.population; ++i) CHECK(reward[i] == log.agent_reward[i]);
      // Societal reputation: previous value plus this episode's applied deltas.
      CHECK(met.societal_reputation == prev_rep + static_cast<double>(rep_delta));
      const auto total = std::accumulate(log.reputations_end.begin(), log.reputations_end.end(), Reputation{0});
      CHECK(met.societal_reputation == static_cast<double>(total));
      prev_rep = met.societal_reputation;
      prev_end = log.reputations_end;
    });
    CHECK(episodes == cfg.episodes);
  }
}

TEST_CASE("reputation sources are honoured") {
  for (Mode m : {Mode::DP_S, Mode::TPPDP}) {
    auto play_only = small(m);
    play_only.encoding.rep_sources = RepSources::PlayOnly;
    run_simulation(play_only, [](const EpisodeLog& log, const EpisodeMetrics&) {
      for (const auto& r : log.rounds) {
        CHECK(std::abs(r.play_rep_applied[0]) == 1);
        for (const auto& ev : r.punishments) CHECK(ev.rep_applied == 0);
      }
    });
    auto punish_only = small(m);
    punish_only.encoding.rep_sources = RepSources::PunishOnly;
    std::size_t punished = 0;
    run_simulation(punish_only, [&](const EpisodeLog& log, const EpisodeMetrics&) {
      for (const auto& r : log.rounds) {
        CHECK(r.play_rep_applied == std::array<Reputation, 2>{0, 0});
        for (const auto& ev : r.punishments) {
          CHECK(ev.rep_applied == ev.deltas.punisher_rep);
          punished += ev.decision == PunishDecision::Punish;
        }
      }
    });
    CHECK(punished > 0);
  }
}

TEST_CASE("all-cooperate round adds 6 per pairing with no punishment") {
  for (Mode m : {Mode::DP, Mode::TPP_S, Mode::TPPDP}) {
    auto cfg = rigged(m, 5, 1);
    Simulation sim(cfg);
    for (auto& b : sim.brains()) {
      rig_constant(b.play, {1.0, 0.0});
      rig_constant(*b.punish, {1.0, 0.0});
      if (b.select) rig_constant(*b.select, {0, 0, 0, 0, 0});
    }
    const auto log = sim.run_episode(0);
    const auto met = episode_metrics(log, nullptr);
    CHECK(met.societal_reward == 6.0 * 5);
    CHECK(met.cooperation_pct == 100.0);
    CHECK(met.punishment_pct == 0.0);
    CHECK_FALSE(met.just_ratio_pct.has_value());
  }
}

TEST_CASE("a punished defector") {
  // Two agents: 0 always defects, 1 always cooperates; both punish defectors only.
  auto cfg = rigged(Mode::DP, 2, 1);
  Simulation sim(cfg);
  rig_constant(sim.brains()[0].play, {0.0, 1.0});
  rig_constant(sim.brains()[1].play, {1.0, 0.0});
  for (auto& b : sim.brains()) rig_just_punisher(*b.punish);
  const auto log = sim.run_episode(0);
  REQUIRE(log.rounds.size() == 2);  // both agents select each other
  for (const auto& r : log.rounds) {
    const std::size_t d = r.pairing.selector == 0 ? 0 : 1;  // defector's side
    double defector = r.payoffs[d], punisher = 0.0;
    for (const auto& ev : r.punishments) {
      if (ev.decision != PunishDecision::Punish) continue;
      CHECK(ev.assignment == PunishmentAssignment{1, 0, PunishKind::Direct});
      defector += ev.deltas.punished_reward;
      punisher += ev.deltas.punisher_reward;
    }
    CHECK(defector == 1.0);   // 4 - 3
    CHECK(punisher == 2.0);   // -10 + 12
  }
  CHECK(log.agent_reward == std::vector<double>{2.0, 4.0});
  CHECK(log.reputations_end == std::vector<Reputation>{-2, 2 + 2 * 2});
  const auto& buf = sim.brains()[0].play.buffer();
  for (std::size_t i = 0; i < buf.size(); ++i) CHECK(buf.at(i).reward == 1.0);
  const auto& pbuf = sim.brains()[1].punish->buffer();
  REQUIRE(pbuf.size() == 2);
  CHECK(pbuf.at(0).reward == 2.0);
  CHECK_FALSE(pbuf.at(0).terminal);
  CHECK(pbuf.at(1).terminal);
}

TEST_CASE("NONE skips the punishment stage") {
  auto cfg = small(Mode::NONE);
  Simulation sim(cfg);
  for (std::size_t e = 0; e < 5; ++e) {
    const auto log = sim.run_episode(e);
    CHECK(log.punish_opportunities == 0);
    for (const auto& r : log.rounds) CHECK(r.punishments.empty());
    CHECK_FALSE(episode_metrics(log, nullptr).punishment_pct.has_value());
  }
  for (const auto& b : sim.brains()) {
    CHECK_FALSE(b.punish.has_value());
    CHECK_FALSE(b.select.has_value());
  }
}

TEST_CASE("transition chaining") {
  auto cfg = small(Mode::DP);
  cfg.rounds = 4;
  Simulation sim(cfg);
  const auto log = sim.run_episode(0);
  for (AgentId i = 0; i < cfg.population; ++i) {
    std::size_t pairings = 0;
    for (const auto& p : log.pairings) pairings += (p.selector == i) + (p.partner == i);
    const auto& buf = sim.brains()[i].play.buffer();
    CHECK(buf.size() == pairings * cfg.rounds);
    std::size_t terminal = 0;
    for (std::size_t k = 0; k < buf.size(); ++k) terminal += buf.at(k).terminal;
    CHECK(terminal == pairings);
    // Punish transitions: exactly one terminal per agent per episode.
    const auto& pb = sim.brains()[i].punish->buffer();
    CHECK(pb.size() == pairings * cfg.rounds);
    terminal = 0;
    for (std::size_t k = 0; k < pb.size(); ++k) terminal += pb.at(k).terminal;
    CHECK(terminal == 1);
    CHECK(pb.at(pb.size() - 1).terminal);
  }
}

TEST_CASE("selection transitions carry the episode reward") {
  auto cfg = small(Mode::TPPDP_S);
  Simulation sim(cfg);
  const auto log0 = sim.run_episode(0);
  const auto log1 = sim.run_episode(1);
  for (AgentId i = 0; i < cfg.population; ++i) {
    const auto& buf = sim.brains()[i].select->buffer();
    REQUIRE(buf.size() == 2);
    const auto t0 = buf.at(0), t1 = buf.at(1);
    CHECK(t0.state == std::vector<double>(cfg.population, 0.0));
    CHECK(t0.action == static_cast<int>(log0.pairings[i].partner));
    CHECK(t0.reward == log0.agent_reward[i]);
    CHECK(t1.reward == log1.agent_reward[i]);
    CHECK_FALSE(t0.terminal);
    CHECK(t0.next_state == t1.state);
  }
}

TEST_CASE("runs are deterministic under the seed") {
  for (Mode m : {Mode::DP_S, Mode::TPPDP}) {
    const auto a = run_simulation(small(m, 5));
    const auto b = run_simulation(small(m, 5));
    const auto c = run_simulation(small(m, 6));
    CHECK(a.metrics == b.metrics);
    CHECK(a.snapshot == b.snapshot);
    CHECK_FALSE(a.metrics == c.metrics);
  }
}

TEST_CASE("numerical failure carries a snapshot") {
  auto cfg = small(Mode::DP);
  cfg.play_hyper.learning_rate = 1e6;
  cfg.play_hyper.max_grad_norm = 0.0;
  cfg.play_hyper.batch_size = 8;
  cfg.episodes = 200;
  try {
    run_simulation(cfg);
    FAIL("expected a numerical failure");
  } catch (const SimulationFailure& e) {
    CHECK(e.snapshot().contains("agents"));
    CHECK(e.episode() < 200);
  }
}
