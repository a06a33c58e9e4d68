#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ipd/episode_log.hpp"

namespace ipd {

using Series = std::vector<std::optional<double>>;

struct EpisodeMetrics {
  std::size_t episode = 0;
  std::optional<double> cooperation_pct;
  std::optional<double> cooperator_selection_pct;
  std::optional<double> punishment_pct;
  std::optional<double> selected_punisher_pct;
  std::optional<double> just_ratio_pct;
  std::optional<double> just_punisher_selection_pct;
  double societal_reward = 0.0;
  double societal_reputation = 0.0;

  friend bool operator==(const EpisodeMetrics&, const EpisodeMetrics&) = default;
};

enum class Metric : std::uint8_t {
  Cooperation,
  CooperatorSelection,
  Punishment,
  SelectedPunisher,
  JustRatio,
  JustPunisherSelection,
  SocietalReward,
  SocietalReputation,
};

inline constexpr std::array<Metric, 8> kAllMetrics{
    Metric::Cooperation,      Metric::CooperatorSelection, Metric::Punishment,
    Metric::SelectedPunisher, Metric::JustRatio,           Metric::JustPunisherSelection,
    Metric::SocietalReward,   Metric::SocietalReputation};

// Column names used in CSV output, e.g. "cooperation_pct".
std::string_view metric_name(Metric m);
Metric parse_metric(std::string_view name);
std::optional<double> metric_value(const EpisodeMetrics& row, Metric m);
Series extract(std::span<const EpisodeMetrics> rows, Metric m);

// Per-agent behaviour in one episode, used by the selection metrics.
struct AgentEpisodeStats {
  std::size_t plays = 0;
  std::size_t cooperations = 0;
  std::size_t opportunities = 0;
  std::size_t punishments = 0;
  std::size_t just_punishments = 0;

  bool cooperator() const { return 2 * cooperations > plays; }  // strict majority
  bool punisher() const { return punishments > 0; }
  bool just_punisher() const { return 2 * just_punishments > opportunities; }
};

std::vector<AgentEpisodeStats> agent_stats(const EpisodeLog& log);

// Selection-based metrics are null when prev is absent (episode 0).
EpisodeMetrics episode_metrics(const EpisodeLog& log, const EpisodeLog* prev);

// Expanding-head trailing mean; nulls are skipped, an all-null window yields null.
Series rolling_mean(const Series& series, std::size_t window = 100);

struct AggregateSeries {
  Series mean, ci_low, ci_high;
};

// Per-episode mean +/- t(1 - (1 - confidence) / 2, n - 1) * sd / sqrt(n) across repeats.
// Episodes with fewer than two non-null repeats get a null interval (mean kept if one).
// Throws ConfigError with fewer than two repeats.
AggregateSeries aggregate_ci(std::span<const Series> repeats, double confidence = 0.95);

double student_t_quantile(double p, double dof);

// Mean of the non-null entries of the last `window` elements; null if none.
std::optional<double> tail_mean(const Series& s, std::size_t window);

}  // namespace ipd
