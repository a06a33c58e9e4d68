#include "ipd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <boost/math/distributions/students_t.hpp>

#include "ipd/errors.hpp"

namespace ipd {

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::Cooperation: return "cooperation_pct";
    case Metric::CooperatorSelection: return "cooperator_selection_pct";
    case Metric::Punishment: return "punishment_pct";
    case Metric::SelectedPunisher: return "selected_punisher_pct";
    case Metric::JustRatio: return "just_ratio_pct";
    case Metric::JustPunisherSelection: return "just_punisher_selection_pct";
    case Metric::SocietalReward: return "societal_reward";
    case Metric::SocietalReputation: return "societal_reputation";
  }
  return "";
}

Metric parse_metric(std::string_view name) {
  for (Metric m : kAllMetrics)
    if (metric_name(m) == name) return m;
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

std::optional<double> metric_value(const EpisodeMetrics& r, Metric m) {
  switch (m) {
    case Metric::Cooperation: return r.cooperation_pct;
    case Metric::CooperatorSelection: return r.cooperator_selection_pct;
    case Metric::Punishment: return r.punishment_pct;
    case Metric::SelectedPunisher: return r.selected_punisher_pct;
    case Metric::JustRatio: return r.just_ratio_pct;
    case Metric::JustPunisherSelection: return r.just_punisher_selection_pct;
    case Metric::SocietalReward: return r.societal_reward;
    case Metric::SocietalReputation: return r.societal_reputation;
  }
  return std::nullopt;
}

Series extract(std::span<const EpisodeMetrics> rows, Metric m) {
  Series s;
  s.reserve(rows.size());
  for (const auto& r : rows) s.push_back(metric_value(r, m));
  return s;
}

std::vector<AgentEpisodeStats> agent_stats(const EpisodeLog& log) {
  std::vector<AgentEpisodeStats> st(log.population);
  for (const auto& r : log.rounds) {
    const std::array<AgentId, 2> who{r.pairing.selector, r.pairing.partner};
    for (std::size_t side = 0; side < 2; ++side) {
      auto& s = st[who[side]];
      ++s.plays;
      if (r.actions[side] == Action::Cooperate) ++s.cooperations;
    }
    for (const auto& ev : r.punishments) {
      auto& s = st[ev.assignment.punisher];
      ++s.opportunities;
      if (ev.decision == PunishDecision::Punish) {
        ++s.punishments;
        if (ev.justness == Justness::Just) ++s.just_punishments;
      }
    }
  }
  return st;
}

namespace {

double pct(std::size_t num, std::size_t den) {
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

EpisodeMetrics episode_metrics(const EpisodeLog& log, const EpisodeLog* prev) {
  EpisodeMetrics m;
  m.episode = log.episode;

  std::size_t plays = 0, coops = 0, opportunities = 0, punishments = 0, just = 0;
  double reward = 0.0;
  for (const auto& r : log.rounds) {
    for (std::size_t side = 0; side < 2; ++side) {
      ++plays;
      if (r.actions[side] == Action::Cooperate) ++coops;
      reward += r.payoffs[side];
    }
    for (const auto& ev : r.punishments) {
      ++opportunities;
      reward += ev.deltas.punisher_reward + ev.deltas.punished_reward;
      if (ev.decision == PunishDecision::Punish) {
        ++punishments;
        if (ev.justness == Justness::Just) ++just;
      }
    }
  }
  if (plays > 0) m.cooperation_pct = pct(coops, plays);
  if (opportunities > 0) m.punishment_pct = pct(punishments, opportunities);
  if (punishments > 0) m.just_ratio_pct = pct(just, punishments);
  m.societal_reward = reward;
  Reputation total = 0;
  for (Reputation r : log.reputations_end) total += r;
  m.societal_reputation = static_cast<double>(total);

  if (prev != nullptr && !log.pairings.empty()) {
    const auto st = agent_stats(*prev);
    std::size_t coop_sel = 0, pun_sel = 0, just_sel = 0;
    for (const auto& p : log.pairings) {
      const auto& s = st[p.partner];
      if (s.cooperator()) ++coop_sel;
      if (s.punisher()) ++pun_sel;
      if (s.just_punisher()) ++just_sel;
    }
    const std::size_t n = log.pairings.size();
    m.cooperator_selection_pct = pct(coop_sel, n);
    if (has_punishment(log.mode)) {
      m.selected_punisher_pct = pct(pun_sel, n);
      m.just_punisher_selection_pct = pct(just_sel, n);
    }
  }
  return m;
}

Series rolling_mean(const Series& series, std::size_t window) {
  if (window == 0) throw InvalidInput("rolling window must be at least 1");
  Series out(series.size());
  for (std::size_t e = 0; e < series.size(); ++e) {
    const std::size_t lo = e + 1 >= window ? e + 1 - window : 0;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = lo; i <= e; ++i) {
      if (!series[i]) continue;
      sum += *series[i];
      ++n;
    }
    if (n > 0) out[e] = sum / static_cast<double>(n);
  }
  return out;
}

double student_t_quantile(double p, double dof) {
  boost::math::students_t dist(dof);
  return boost::math::quantile(dist, p);
}

AggregateSeries aggregate_ci(std::span<const Series> repeats, double confidence) {
  if (repeats.size() < 2) throw ConfigError("confidence intervals need at least two repeats");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must be in (0, 1)");
  const std::size_t len = repeats.front().size();
  for (const auto& r : repeats)
    if (r.size() != len) throw InvalidInput("repeats have different lengths");

  AggregateSeries agg;
  agg.mean.resize(len);
  agg.ci_low.resize(len);
  agg.ci_high.resize(len);
  const double upper = 1.0 - (1.0 - confidence) / 2.0;
  std::vector<double> vals;
  vals.reserve(repeats.size());
  for (std::size_t e = 0; e < len; ++e) {
    // Sorted summation makes the result independent of repeat order.
    vals.clear();
    for (const auto& r : repeats)
      if (r[e]) vals.push_back(*r[e]);
    if (vals.empty()) continue;
    std::sort(vals.begin(), vals.end());
    const auto n = static_cast<double>(vals.size());
    double sum = 0.0;
    for (double v : vals) sum += v;
    const double mean = vals.front() == vals.back() ? vals.front() : sum / n;
    agg.mean[e] = mean;
    if (vals.size() < 2) continue;
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    const double half = student_t_quantile(upper, n - 1.0) * sd / std::sqrt(n);
    agg.ci_low[e] = mean - half;
    agg.ci_high[e] = mean + half;
  }
  return agg;
}

std::optional<double> tail_mean(const Series& s, std::size_t window) {
  const std::size_t lo = s.size() > window ? s.size() - window : 0;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = lo; i < s.size(); ++i)
    if (s[i]) {
      sum += *s[i];
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace ipd
