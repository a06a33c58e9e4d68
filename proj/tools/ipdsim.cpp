// ipdsim: run experiments, hyper-parameter searches and aggregations.
//
// Exit codes: 0 ok, 2 invalid configuration, 3 numerical failure (snapshot written),
// 4 missing repeat files.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ipd/experiment.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitMissing = 4;

// Flags shared by `run` and `search`.
struct Flags {
  std::optional<std::string> preset, config, mode, rep_sources, rep_scaling, out;
  std::optional<int> scheme;
  std::optional<std::size_t> episodes, rounds, pop_size, repeats, hidden, jobs;
  std::optional<std::uint64_t> seed;
  std::optional<bool> rep_in_play, rep_in_punish;

  void attach(CLI::App& app, bool with_preset) {
    if (with_preset) app.add_option("--preset", preset, "experiment preset (see `presets list`)");
    app.add_option("--config", config, "JSON config file; flags override its values");
    app.add_option("--mode", mode, "DP, DP-S, TPP, TPP-S, TPPDP, TPPDP-S or NONE");
    app.add_option("--scheme", scheme, "just-punishment reward scheme (1 or 2)");
    app.add_option("--episodes", episodes, "episodes per repeat");
    app.add_option("--rounds", rounds, "rounds per episode");
    app.add_option("--pop-size", pop_size, "population size");
    app.add_option("--repeats", repeats, "independent repeats");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--hidden-dim", hidden, "hidden layer width");
    app.add_option("--rep-sources", rep_sources, "reputation from play, punish or both");
    app.add_option("--rep-scaling", rep_scaling, "reputation inputs: raw or per-episode");
    app.add_option("--rep-in-play-state", rep_in_play, "reputation in the play state (true/false)");
    app.add_option("--rep-in-punish-state", rep_in_punish,
                   "reputation in the punish state (true/false)");
    app.add_option("--jobs", jobs, "concurrent repeats (default: all threads)");
    app.add_option("--out", out, "output directory (default $IPDSIM_OUT/<name> or runs/<name>)");
  }

  ipd::Overrides overrides() const {
    ipd::Overrides o;
    if (config) o = ipd::load_config_file(*config);
    ipd::Overrides cli;
    cli.preset = preset;
    if (mode) cli.mode = ipd::parse_mode(*mode);
    cli.scheme = scheme;
    cli.episodes = episodes;
    cli.rounds = rounds;
    cli.pop_size = pop_size;
    cli.repeats = repeats;
    cli.hidden = hidden;
    cli.jobs = jobs;
    cli.seed = seed;
    if (rep_sources) cli.rep_sources = ipd::parse_rep_sources(*rep_sources);
    if (rep_scaling) cli.rep_scaling = ipd::parse_rep_scaling(*rep_scaling);
    cli.rep_in_play_state = rep_in_play;
    cli.rep_in_punish_state = rep_in_punish;
    cli.out = out;
    return ipd::merge(o, cli);
  }
};

int cmd_run(const Flags& f, const std::optional<std::string>& manifest) {
  ipd::ExperimentPlan plan;
  if (manifest) {
    std::ifstream in(*manifest);
    if (!in) throw ipd::MissingFiles({*manifest});
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ipd::ConfigError("manifest is not valid JSON: " + std::string(e.what()));
    }
    plan = ipd::plan_from_manifest(j);
    if (f.out) plan.out = *f.out;
    if (f.jobs) plan.jobs = *f.jobs;
  } else {
    plan = ipd::plan_experiment(f.overrides());
  }
  std::cerr << "experiment " << plan.name << ": " << plan.variants.size() << " variant(s) x "
            << plan.repeats << " repeat(s) -> " << plan.out.string() << '\n';
  ipd::run_experiment(plan, &std::cerr);
  std::cout << ipd::manifest_path(plan).string() << '\n';
  return 0;
}

int cmd_search(const Flags& f, std::size_t trials) {
  const auto o = f.overrides();
  ipd::Overrides single = o;
  single.preset.reset();
  single.repeats.reset();
  auto plan = ipd::plan_experiment(single);
  ipd::SearchOptions opt;
  opt.trials = trials;
  opt.repeats = o.repeats.value_or(3);
  opt.episodes = o.episodes.value_or(500);
  opt.seed = o.seed.value_or(0);
  opt.jobs = o.jobs.value_or(0);
  const auto ranked =
      ipd::hyper_search(ipd::SearchSpace::published(), plan.variants.front().config, opt, &std::cerr);
  const fs::path out = o.out ? fs::path(*o.out) : plan.out.parent_path() / "search.csv";
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream os(out);
  if (!os) throw ipd::ConfigError("cannot write " + out.string());
  ipd::write_search_csv(os, ranked);
  std::cout << out.string() << '\n';
  return 0;
}

int cmd_aggregate(const std::optional<std::string>& manifest, const std::vector<std::string>& in,
                  const std::optional<std::string>& out, const std::optional<std::string>& label) {
  if (manifest) {
    if (!in.empty()) throw ipd::ConfigError("use either --manifest or --in, not both");
    ipd::aggregate_manifest(*manifest);
    return 0;
  }
  if (in.empty() || !out) throw ipd::ConfigError("aggregate needs --manifest or --in ... --out");
  std::vector<fs::path> inputs(in.begin(), in.end());
  std::string name;
  if (label) {
    name = *label;
  } else {
    std::vector<fs::path> missing;
    for (const auto& p : inputs)
      if (!fs::is_regular_file(p)) missing.push_back(p);
    if (!missing.empty()) throw ipd::MissingFiles(missing);
    name = ipd::read_raw_csv(inputs.front()).mode;
  }
  ipd::aggregate_files(inputs, name, *out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent reinforcement learning in the iterated prisoner's dilemma"};
  app.require_subcommand(1);

  Flags run_flags, search_flags;
  std::optional<std::string> run_manifest;
  auto* run = app.add_subcommand("run", "run a preset or a single configuration");
  run_flags.attach(*run, true);
  run->add_option("--manifest", run_manifest, "re-run exactly the experiment in a manifest");

  std::size_t trials = 100;
  auto* search = app.add_subcommand("search", "random hyper-parameter search");
  search_flags.attach(*search, false);
  search->add_option("--trials", trials, "number of sampled configurations")->capture_default_str();

  std::optional<std::string> agg_manifest, agg_out, agg_label;
  std::vector<std::string> agg_in;
  auto* aggregate = app.add_subcommand("aggregate", "recompute aggregate CSVs from raw repeats");
  aggregate->add_option("--manifest", agg_manifest, "every variant listed in a manifest");
  aggregate->add_option("--in", agg_in, "raw repeat CSVs of one variant");
  aggregate->add_option("--out", agg_out, "aggregate CSV to write");
  aggregate->add_option("--label", agg_label, "variant column value (default: the mode)");

  auto* presets = app.add_subcommand("presets", "list experiment presets");
  presets->add_subcommand("list", "print preset names and descriptions");
  presets->require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_flags, run_manifest);
    if (*search) return cmd_search(search_flags, trials);
    if (*aggregate) return cmd_aggregate(agg_manifest, agg_in, agg_out, agg_label);
    if (*presets) {
      for (const auto& name : ipd::preset_names()) {
        const auto p = ipd::make_preset(name);
        std::cout << name << "\t" << p.variants.size() << " variant(s)\t" << p.description << '\n';
      }
      return 0;
    }
  } catch (const ipd::ExperimentFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    if (!e.snapshot_path().empty()) std::cerr << "snapshot: " << e.snapshot_path().string() << '\n';
    return kExitNumerical;
  } catch (const ipd::NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ipd::MissingFiles& e) {
    std::cerr << e.what() << '\n';
    return kExitMissing;
  } catch (const ipd::ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ipd::InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitConfig;
  }
  return 0;
}
