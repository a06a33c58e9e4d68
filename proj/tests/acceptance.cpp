// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Statistical criteria run the desk-scale setting (N=5, 2000 episodes, 5 repeats) and
// keep their CSVs under the work directory given as the first argument.
//
// usage: acceptance [work dir]

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ipd/dqn.hpp"
#include "ipd/experiment.hpp"
#include "ipd/kernels.hpp"
#include "ipd/metrics.hpp"
#include "ipd/simulation.hpp"

using namespace ipd;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kRepeats = 5;
constexpr std::size_t kMajority = kRepeats / 2 + 1;
constexpr std::size_t kWindow = 100;
constexpr std::uint64_t kSeed = 1;

int g_failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  g_failures += !ok;
}

std::string fmt(std::optional<double> v) {
  if (!v) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", *v);
  return buf;
}

// ---- exact units -------------------------------------------------------------------

void exact_units() {
  std::vector<std::string> bad;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) bad.push_back(what);
  };
  using enum Action;
  expect(payoff(Cooperate, Cooperate) == std::pair{3.0, 3.0}, "payoff CC");
  expect(payoff(Cooperate, Defect) == std::pair{0.0, 4.0}, "payoff CD");
  expect(payoff(Defect, Cooperate) == std::pair{4.0, 0.0}, "payoff DC");
  expect(payoff(Defect, Defect) == std::pair{1.0, 1.0}, "payoff DD");
  expect(play_reputation_delta(Cooperate) == 1, "cooperate rep");
  expect(play_reputation_delta(Defect) == -1, "defect rep");
  const auto s1 = RewardScheme::scheme1(), s2 = RewardScheme::scheme2();
  for (const auto& s : {s1, s2}) {
    const auto just = punishment_deltas(s, PunishDecision::Punish, Defect);
    const auto unjust = punishment_deltas(s, PunishDecision::Punish, Cooperate);
    expect(just.punisher_rep == 2, "just punish rep");
    expect(unjust.punisher_rep == -3, "unjust punish rep");
    expect(unjust.punisher_reward == -10.0, "unjust punisher reward");
    expect(just.punished_reward == -3.0 && unjust.punished_reward == -3.0, "punished reward");
  }
  expect(punishment_deltas(s1, PunishDecision::Punish, Defect).punisher_reward == -3.0,
         "scheme 1 net");
  expect(punishment_deltas(s2, PunishDecision::Punish, Defect).punisher_reward == 2.0,
         "scheme 2 net");
  const std::pair<ModelHyper, double> minima[] = {{ModelHyper::selection(), 0.0001},
                                                  {ModelHyper::playing(), 0.01},
                                                  {ModelHyper::punishing(), 0.2}};
  for (const auto& [h, lo] : minima) {
    const auto sched = h.schedule(2000);
    expect(sched.at(0) == 0.8889, "epsilon start");
    expect(sched.at(1999) == lo, "epsilon minimum");
  }
  std::string detail = "payoffs, reputation deltas, scheme nets -3/+2, epsilon endpoints";
  for (const auto& b : bad) detail += "; mismatch " + b;
  report("exact-units", bad.empty(), detail);
}

// ---- gradient check ------------------------------------------------------------------

double loss_of(const MlpParams& p, const Batch& batch, const std::vector<double>& y) {
  QNetwork net(p.shape);
  net.params() = p;
  double loss = 0.0;
  const std::size_t in = p.shape.input;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::vector<double> x(batch.states.begin() + b * in, batch.states.begin() + (b + 1) * in);
    const double d = net.forward(x)[batch.actions[b]] - y[b];
    loss += d * d;
  }
  return loss / batch.size();
}

void gradient_check() {
  Rng rng(2024);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const MlpShape shape{4, 8, 2};
  const double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    QNetwork net(shape, rng), target(shape, rng);
    std::vector<Transition> ts(6);
    for (auto& t : ts) {
      t.state = {u(rng), u(rng), u(rng), u(rng)};
      t.next_state = {u(rng), u(rng), u(rng), u(rng)};
      t.action = static_cast<int>(rng() % 2);
      t.reward = 2.5 * u(rng);
      t.terminal = rng() % 3 == 0;
    }
    const Batch batch = Batch::from(ts);
    TrainerConfig cfg;
    cfg.learning_rate = 1.0;
    cfg.gamma = 0.9;
    cfg.batch_size = batch.size();
    cfg.max_grad_norm = 0.0;
    std::vector<double> y;
    kernels::Workspace ws;
    td_targets(target, batch, cfg.gamma, y, ws);

    QNetwork stepped = net;
    train_step(stepped, target, batch, cfg);
    MlpParams p = net.params(), after = stepped.params();
    std::vector<double*> w;
    p.for_each([&](double& x) { w.push_back(&x); });
    std::vector<double> a;
    after.for_each([&](double& x) { a.push_back(x); });
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double analytic = *w[i] - a[i];
      const double saved = *w[i];
      *w[i] = saved + h;
      const double lp = loss_of(p, batch, y);
      *w[i] = saved - h;
      const double lm = loss_of(p, batch, y);
      *w[i] = saved;
      const double numeric = (lp - lm) / (2 * h);
      diff += (analytic - numeric) * (analytic - numeric);
      na += analytic * analytic;
      nn += numeric * numeric;
    }
    worst = std::max(worst, std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12}));
  }
  std::ostringstream os;
  os << "100 random 4-8-2 nets, worst relative error " << worst << " (limit 1e-4)";
  report("gradient-check", worst <= 1e-4, os.str());
}

// ---- structure ---------------------------------------------------------------------

void structural() {
  std::vector<std::string> bad;
  Rng rng(99);

  std::size_t pairings = 0, self = 0;
  for (Mode m : {Mode::NONE, Mode::DP_S, Mode::TPP_S, Mode::TPPDP_S}) {
    auto cfg = MechanismConfig::for_mode(m);
    std::vector<AgentBrain> brains;
    for (std::size_t i = 0; i < cfg.population; ++i)
      brains.push_back(AgentBrain::create(cfg.brain_spec(), rng));
    std::vector<Reputation> reps(cfg.population);
    std::uniform_int_distribution<int> rep(-30, 30);
    for (int draw = 0; draw < 5000; ++draw) {
      for (auto& r : reps) r = rep(rng);
      for (const auto& p : pair_agents(cfg, brains, reps, draw % 2000, rng)) {
        ++pairings;
        self += p.selector == p.partner;
      }
    }
  }
  if (self) bad.push_back(std::to_string(self) + " self-pairings");

  std::size_t episodes = 0, tpp_rounds = 0;
  for (Mode m : kMainModes) {
    auto cfg = MechanismConfig::for_mode(m);
    cfg.episodes = 100;
    cfg.seed = 5;
    const std::size_t want = m == Mode::TPPDP || m == Mode::TPPDP_S ? 4 : 2;
    double prev_rep = 0.0;
    run_simulation(cfg, [&](const EpisodeLog& log, const EpisodeMetrics& met) {
      ++episodes;
      std::vector<double> reward(cfg.population, 0.0);
      Reputation rep_delta = 0;
      for (const auto& r : log.rounds) {
        const AgentId a = r.pairing.selector, b = r.pairing.partner;
        if (r.punishments.size() != want) bad.push_back("opportunity count");
        reward[a] += r.payoffs[0];
        reward[b] += r.payoffs[1];
        rep_delta += r.play_rep_applied[0] + r.play_rep_applied[1];
        bool third = false;
        for (const auto& ev : r.punishments) {
          if (ev.assignment.kind == PunishKind::ThirdParty) {
            third = true;
            if (ev.assignment.punisher == a || ev.assignment.punisher == b)
              bad.push_back("third-party punisher inside the pair");
          }
          reward[ev.assignment.punisher] += ev.deltas.punisher_reward;
          reward[ev.assignment.target] += ev.deltas.punished_reward;
          rep_delta += ev.rep_applied;
        }
        tpp_rounds += third;
      }
      const double total = std::accumulate(reward.begin(), reward.end(), 0.0);
      if (met.societal_reward != total) bad.push_back("societal reward identity");
      const double rep_now = std::accumulate(log.reputations_end.begin(), log.reputations_end.end(), 0.0);
      if (met.societal_reputation != prev_rep + rep_delta || met.societal_reputation != rep_now)
        bad.push_back("societal reputation identity");
      prev_rep = met.societal_reputation;
    });
  }
  std::sort(bad.begin(), bad.end());
  bad.erase(std::unique(bad.begin(), bad.end()), bad.end());
  std::ostringstream os;
  os << pairings << " pairings, " << tpp_rounds << " third-party rounds, " << episodes
     << " episodes checked";
  for (const auto& b : bad) os << "; violated: " << b;
  report("structural", bad.empty() && pairings >= 100000, os.str());
}

// ---- determinism -------------------------------------------------------------------

void determinism() {
  auto cfg = MechanismConfig::for_mode(Mode::TPPDP_S);
  cfg.episodes = 200;
  cfg.seed = derive_seed(kSeed, 0);
  auto csv = [&] {
    std::ostringstream os;
    write_raw_csv(os, cfg, 0, run_simulation(cfg).metrics);
    return os.str();
  };
  const auto a = csv(), b = csv();
  report("determinism", a == b && !a.empty(),
         "TPPDP-S, 200 episodes, two runs: " + std::string(a == b ? "byte-identical" : "differ") +
             " (" + std::to_string(a.size()) + " bytes)");
}

// ---- statistical criteria ----------------------------------------------------------

// final[label][repeat][metric]
using Finals = std::map<std::string, std::vector<std::map<Metric, std::optional<double>>>>;

Finals run_plan(ExperimentPlan plan, const fs::path& work) {
  plan.repeats = kRepeats;
  plan.seed = kSeed;
  plan.jobs = 0;
  plan.out = work / plan.name;
  std::cerr << "running " << plan.name << " (" << plan.variants.size() << " x " << kRepeats << ")\n";
  const auto res = run_experiment(plan);
  Finals f;
  for (std::size_t v = 0; v < plan.variants.size(); ++v)
    for (const auto& rows : res.results[v]) {
      std::map<Metric, std::optional<double>> m;
      for (Metric k : kAllMetrics) m[k] = tail_mean(extract(rows, k), kWindow);
      f[plan.variants[v].label].push_back(m);
    }
  return f;
}

ExperimentPlan preset_plan(const std::string& name) {
  Overrides o;
  o.preset = name;
  return plan_experiment(o);
}

std::size_t count_if(const Finals& f, const std::string& label,
                     const std::function<bool(const std::map<Metric, std::optional<double>>&)>& pred) {
  std::size_t n = 0;
  for (const auto& r : f.at(label)) n += pred(r);
  return n;
}

std::string values(const Finals& f, const std::string& label, Metric m) {
  std::string s = "[";
  for (const auto& r : f.at(label)) s += (s.size() > 1 ? " " : "") + fmt(r.at(m));
  return s + "]";
}

double mean_of(const Finals& f, const std::string& label, Metric m) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : f.at(label))
    if (r.at(m)) s += *r.at(m), ++n;
  return n ? s / n : std::nan("");
}

bool at_least(const std::optional<double>& v, double x) { return v && *v >= x; }
bool below(const std::optional<double>& v, double x) { return v && *v < x; }

std::string label(Mode m) { return std::string(to_string(m)); }

void scheme2_convergence(const Finals& f) {
  bool ok = true;
  std::ostringstream os;
  for (Mode m : kMainModes) {
    const auto n = count_if(f, label(m), [](auto& r) { return at_least(r.at(Metric::Cooperation), 60.0); });
    ok &= n >= 4;
    os << label(m) << " " << n << "/5 " << values(f, label(m), Metric::Cooperation) << "; ";
  }
  for (Mode hi : {Mode::TPPDP, Mode::TPPDP_S})
    for (Mode lo : {Mode::DP, Mode::DP_S}) {
      const bool ge = mean_of(f, label(hi), Metric::Cooperation) >= mean_of(f, label(lo), Metric::Cooperation);
      ok &= ge;
      if (!ge) os << label(hi) << " below " << label(lo) << "; ";
    }
  os << "mean final cooperation";
  for (Mode m : kMainModes) os << " " << label(m) << "=" << fmt(mean_of(f, label(m), Metric::Cooperation));
  report("scheme2-convergence", ok, os.str());
}

void reward_ordering(const Finals& f) {
  bool ok = true;
  std::ostringstream os;
  for (Mode hi : {Mode::DP_S, Mode::DP})
    for (Mode lo : {Mode::TPP, Mode::TPP_S, Mode::TPPDP, Mode::TPPDP_S}) {
      std::size_t wins = 0;
      for (std::size_t r = 0; r < kRepeats; ++r) {
        const auto a = f.at(label(hi))[r].at(Metric::SocietalReward);
        const auto b = f.at(label(lo))[r].at(Metric::SocietalReward);
        wins += a && b && *a > *b;
      }
      ok &= wins >= kMajority;
      os << label(hi) << ">" << label(lo) << " " << wins << "/5; ";
    }
  os << "mean final reward";
  for (Mode m : kMainModes) os << " " << label(m) << "=" << fmt(mean_of(f, label(m), Metric::SocietalReward));
  report("reward-ordering", ok, os.str());
}

void scheme1_failure(const Finals& f) {
  bool ok = true;
  std::ostringstream os;
  for (Mode m : kMainModes) {
    const auto n = count_if(f, label(m), [](auto& r) {
      return below(r.at(Metric::Cooperation), 30.0) && below(r.at(Metric::Punishment), 10.0);
    });
    ok &= n >= kMajority;
    os << label(m) << " " << n << "/5 coop " << values(f, label(m), Metric::Cooperation) << " punish "
       << values(f, label(m), Metric::Punishment) << "; ";
  }
  report("scheme1-failure", ok, os.str());
}

void baseline_collapse(const Finals& f) {
  const auto n = count_if(f, "NONE", [](auto& r) { return below(r.at(Metric::Cooperation), 10.0); });
  report("baseline-collapse", n >= kMajority,
         "NONE " + std::to_string(n) + "/5 below 10% " + values(f, "NONE", Metric::Cooperation));
}

void just_punishment(const Finals& f) {
  bool ok = true;
  std::ostringstream os;
  for (Mode m : {Mode::DP, Mode::DP_S}) {
    const auto n = count_if(f, label(m), [](auto& r) { return at_least(r.at(Metric::JustRatio), 95.0); });
    ok &= n >= kMajority;
    os << label(m) << " " << n << "/5 at least 95% " << values(f, label(m), Metric::JustRatio) << "; ";
  }
  std::size_t lower = 0;
  for (std::size_t r = 0; r < kRepeats; ++r) {
    const auto t = f.at("TPP")[r].at(Metric::JustRatio), d = f.at("DP")[r].at(Metric::JustRatio);
    lower += t && d && *t < *d;
  }
  ok &= lower >= kMajority;
  os << "TPP<DP " << lower << "/5 " << values(f, "TPP", Metric::JustRatio);
  report("just-punishment", ok, os.str());
}

void selection_learning(const Finals& f) {
  bool ok = true;
  std::ostringstream os;
  for (Mode m : {Mode::DP_S, Mode::TPP_S, Mode::TPPDP_S}) {
    const auto n = count_if(f, label(m), [](auto& r) { return at_least(r.at(Metric::CooperatorSelection), 90.0); });
    ok &= n >= kMajority;
    os << label(m) << " " << n << "/5 " << values(f, label(m), Metric::CooperatorSelection) << "; ";
  }
  report("selection-learning", ok, os.str());
}

void population_sizes(const Finals& scheme2, const Finals& larger) {
  bool ok = true;
  std::ostringstream os;
  auto check = [&](const Finals& f, const std::string& key, const std::string& name) {
    const auto n = count_if(f, key, [](auto& r) { return at_least(r.at(Metric::Cooperation), 60.0); });
    ok &= n >= kMajority;
    os << name << " " << n << "/5 " << values(f, key, Metric::Cooperation) << "; ";
  };
  for (Mode m : {Mode::TPP_S, Mode::DP_S}) {
    check(scheme2, label(m), label(m) + "_N5");
    for (std::size_t n : {10, 15}) {
      const auto key = label(m) + "_N" + std::to_string(n);
      check(larger, key, key);
    }
  }
  report("population-sizes", ok, os.str());
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_runs");
  fs::create_directories(work);

  exact_units();
  gradient_check();
  structural();
  determinism();

  const auto scheme2 = run_plan(preset_plan("main-six"), work);
  scheme2_convergence(scheme2);
  reward_ordering(scheme2);

  scheme1_failure(run_plan(preset_plan("scheme1"), work));
  baseline_collapse(run_plan(preset_plan("baseline-none"), work));
  just_punishment(scheme2);
  selection_learning(scheme2);

  auto pop = preset_plan("pop-sizes");
  std::erase_if(pop.variants, [](const Variant& v) {
    return v.config.population != 10 && v.config.population != 15;
  });
  population_sizes(scheme2, run_plan(pop, work));

  std::cout << (g_failures ? std::to_string(g_failures) + " criterion(s) failed" : "all criteria passed")
            << std::endl;
  return g_failures ? 1 : 0;
}
