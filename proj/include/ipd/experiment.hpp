#pragma once

// Experiment harness: presets, config files, seed derivation, parallel repeats,
// CSV/JSON persistence and the random hyper-parameter search.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ipd/errors.hpp"
#include "ipd/mechanism.hpp"
#include "ipd/metrics.hpp"

namespace ipd {

inline constexpr std::string_view kSoftwareVersion = "1.0.0";
// Environment variable naming the default output root.
inline constexpr const char* kOutputEnv = "IPDSIM_OUT";

// splitmix64 finaliser applied to master + (index + 1) * golden gamma. Repeat r of an
// experiment runs with derive_seed(master, r).
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

nlohmann::json to_json(const MechanismConfig& cfg);
// Inverse of to_json. Missing keys keep their defaults; the scheme is rebuilt from its id.
MechanismConfig mechanism_from_json(const nlohmann::json& j);

// Values from a config file or the command line. Unset fields fall through.
struct Overrides {
  std::optional<std::string> preset;
  std::optional<Mode> mode;
  std::optional<int> scheme;
  std::optional<std::size_t> episodes, rounds, pop_size, repeats, hidden, jobs;
  std::optional<std::uint64_t> seed;
  std::optional<RepSources> rep_sources;
  std::optional<bool> rep_in_play_state, rep_in_punish_state;
  std::optional<RepScaling> rep_scaling;
  std::optional<std::string> out;
};

// Keys mirror the long CLI flags with '-' replaced by '_' ("pop_size", "hidden_dim", ...).
// Unknown keys are a ConfigError so typos do not pass silently.
Overrides overrides_from_json(const nlohmann::json& j);
Overrides load_config_file(const std::filesystem::path& path);
// Fields set in `top` win.
Overrides merge(Overrides base, const Overrides& top);

struct Variant {
  std::string label;  // unique within an experiment, safe as a file stem
  MechanismConfig config;
};

struct Preset {
  std::string name;
  std::string description;
  std::vector<Variant> variants;
};

const std::vector<std::string>& preset_names();
Preset make_preset(std::string_view name);  // ConfigError for unknown names

struct ExperimentPlan {
  std::string name;
  std::vector<Variant> variants;
  std::size_t repeats = 20;
  std::uint64_t seed = 0;
  std::size_t jobs = 0;  // 0: one per available thread
  std::filesystem::path out;
};

// Without a preset a single variant is built from the mode (default DP). With a preset,
// `mode` keeps only that mode's variants and the remaining overrides apply to all of them.
ExperimentPlan plan_experiment(const Overrides& o);

nlohmann::json manifest_json(const ExperimentPlan& plan);
ExperimentPlan plan_from_manifest(const nlohmann::json& manifest);

std::filesystem::path raw_path(const ExperimentPlan& plan, std::size_t variant, std::size_t repeat);
std::filesystem::path aggregate_path(const ExperimentPlan& plan, std::size_t variant);
std::filesystem::path manifest_path(const ExperimentPlan& plan);

// ---- CSV ----------------------------------------------------------------------------

inline constexpr std::string_view kRawHeader =
    "episode,repeat,mode,scheme,pop_size,cooperation_pct,cooperator_selection_pct,"
    "punishment_pct,selected_punisher_pct,just_ratio_pct,just_punisher_selection_pct,"
    "societal_reward,societal_reputation";
inline constexpr std::string_view kAggregateHeader = "variant,episode,metric,mean,ci_low,ci_high";

// Shortest round-trip decimal; null is the empty string.
std::string format_number(std::optional<double> v);

void write_raw_csv(std::ostream& os, const MechanismConfig& cfg, std::size_t repeat,
                   std::span<const EpisodeMetrics> rows);

struct RawTable {
  std::string mode;
  int scheme = 0;
  std::size_t pop_size = 0;
  std::size_t repeat = 0;
  std::vector<EpisodeMetrics> rows;
};
RawTable read_raw_csv(std::istream& is);
RawTable read_raw_csv(const std::filesystem::path& path);

// Rolling mean (window 100) per repeat, then the 95% interval across repeats. One row
// per (metric, episode); metrics in column order. Needs at least two repeats.
void write_aggregate_csv(std::ostream& os, std::string_view label,
                         std::span<const std::vector<EpisodeMetrics>> repeats,
                         std::size_t window = 100);

class MissingFiles : public std::runtime_error {
 public:
  explicit MissingFiles(std::vector<std::filesystem::path> paths);
  const std::vector<std::filesystem::path>& paths() const { return paths_; }

 private:
  std::vector<std::filesystem::path> paths_;
};

// Reads every listed repeat (throwing MissingFiles naming all absent ones) and writes
// the aggregate file.
void aggregate_files(std::span<const std::filesystem::path> inputs, std::string_view label,
                     const std::filesystem::path& out);
// Recomputes every aggregate listed in a manifest from its raw files.
void aggregate_manifest(const std::filesystem::path& manifest);

// ---- running ------------------------------------------------------------------------

// Raised when a repeat hits a numerical failure; the snapshot has been written.
class ExperimentFailure : public NumericalFailure {
 public:
  ExperimentFailure(const std::string& what, std::filesystem::path snapshot);
  const std::filesystem::path& snapshot_path() const { return snapshot_; }

 private:
  std::filesystem::path snapshot_;
};

struct RunResult {
  // results[variant][repeat]
  std::vector<std::vector<std::vector<EpisodeMetrics>>> results;
};

// Runs variants x repeats, up to plan.jobs at a time. Without an output directory
// nothing is written; otherwise the manifest is written first, then raw and aggregate
// CSVs. Progress lines go to `log` when given.
RunResult run_experiment(const ExperimentPlan& plan, std::ostream* log = nullptr);

// ---- random search ------------------------------------------------------------------

struct SearchSpace {
  std::vector<std::size_t> buffer_sizes;
  std::vector<std::size_t> batch_sizes;
  std::vector<std::size_t> target_updates;
  std::vector<double> eps_min;
  std::vector<double> eps_max;
  std::vector<double> eps_decay;
  std::vector<double> gammas;
  std::vector<double> learning_rates;

  static SearchSpace published();
};

// numpy.linspace(lo, hi, n).
std::vector<double> linspace(double lo, double hi, std::size_t n);

struct ModelKnobs {
  std::size_t buffer = 0;
  double eps_min = 0.0, eps_max = 0.0, eps_decay = 0.0, learning_rate = 0.0;
};

// Batch size, target update and discount are shared; the rest is drawn per ability.
struct TrialParams {
  std::size_t batch_size = 0;
  std::size_t target_update = 0;
  double gamma = 0.0;
  ModelKnobs select, play, punish;

  void apply(MechanismConfig& cfg) const;
};

// A drawn minimum above the drawn maximum is swapped so every schedule is valid.
TrialParams sample_trial(const SearchSpace& space, Rng& rng);

struct TrialResult {
  std::size_t trial = 0;
  TrialParams params;
  double score = 0.0;  // mean societal reward over all episodes and repeats
};

struct SearchOptions {
  std::size_t trials = 100;
  std::size_t repeats = 3;
  std::size_t episodes = 500;
  std::uint64_t seed = 0;
  std::size_t jobs = 0;
};

// Sorted by score descending, ties by trial index.
std::vector<TrialResult> hyper_search(const SearchSpace& space, const MechanismConfig& base,
                                      const SearchOptions& opt, std::ostream* log = nullptr);
void write_search_csv(std::ostream& os, std::span<const TrialResult> ranked);

}  // namespace ipd
