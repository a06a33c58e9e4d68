#include "ipd/experiment.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <utility>

#include "ipd/simulation.hpp"

namespace ipd {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master + (index + 1) * 0x9E3779B97F4A7C15ULL);
}

// ---- config <-> json ----------------------------------------------------------------

namespace {

json hyper_json(const ModelHyper& h) {
  return {{"eps_max", h.eps_max},
          {"eps_min", h.eps_min},
          {"eps_decay", h.eps_decay},
          {"learning_rate", h.learning_rate},
          {"buffer_capacity", h.buffer_capacity},
          {"gamma", h.gamma},
          {"batch_size", h.batch_size},
          {"target_update", h.target_update},
          {"max_grad_norm", h.max_grad_norm}};
}

template <typename T>
void read_if(const json& j, const char* key, T& dst) {
  if (auto it = j.find(key); it != j.end()) dst = it->get<T>();
}

ModelHyper hyper_from_json(const json& j, ModelHyper h) {
  read_if(j, "eps_max", h.eps_max);
  read_if(j, "eps_min", h.eps_min);
  read_if(j, "eps_decay", h.eps_decay);
  read_if(j, "learning_rate", h.learning_rate);
  read_if(j, "buffer_capacity", h.buffer_capacity);
  read_if(j, "gamma", h.gamma);
  read_if(j, "batch_size", h.batch_size);
  read_if(j, "target_update", h.target_update);
  read_if(j, "max_grad_norm", h.max_grad_norm);
  return h;
}

}  // namespace

json to_json(const MechanismConfig& c) {
  const auto& s = c.scheme;
  return {
      {"mode", std::string(to_string(c.mode))},
      {"scheme",
       {{"id", s.number()},
        {"punisher_cost", s.punisher_cost},
        {"punished_penalty", s.punished_penalty},
        {"just_bonus", s.just_bonus},
        {"just_net", s.just_net()},
        {"just_rep_delta", s.just_rep_delta},
        {"unjust_rep_delta", s.unjust_rep_delta},
        {"coop_rep_delta", s.coop_rep_delta},
        {"defect_rep_delta", s.defect_rep_delta}}},
      {"pop_size", c.population},
      {"episodes", c.episodes},
      {"rounds", c.rounds},
      {"hidden_dim", c.hidden},
      {"seed", c.seed},
      {"learning", c.learning},
      {"encoding",
       {{"rep_in_play_state", c.encoding.rep_in_play_state},
        {"rep_in_punish_state", c.encoding.rep_in_punish_state},
        {"rep_sources", std::string(to_string(c.encoding.rep_sources))},
        {"rep_scaling", std::string(to_string(c.encoding.rep_scaling))}}},
      {"models",
       {{"select", hyper_json(c.select_hyper)},
        {"play", hyper_json(c.play_hyper)},
        {"punish", hyper_json(c.punish_hyper)}}},
  };
}

MechanismConfig mechanism_from_json(const json& j) {
  try {
    MechanismConfig c = MechanismConfig::for_mode(parse_mode(j.at("mode").get<std::string>()));
    if (auto it = j.find("scheme"); it != j.end())
      c.scheme = RewardScheme::from_number(it->is_object() ? it->at("id").get<int>()
                                                           : it->get<int>());
    read_if(j, "pop_size", c.population);
    read_if(j, "episodes", c.episodes);
    read_if(j, "rounds", c.rounds);
    read_if(j, "hidden_dim", c.hidden);
    read_if(j, "seed", c.seed);
    read_if(j, "learning", c.learning);
    if (auto it = j.find("encoding"); it != j.end()) {
      read_if(*it, "rep_in_play_state", c.encoding.rep_in_play_state);
      read_if(*it, "rep_in_punish_state", c.encoding.rep_in_punish_state);
      if (auto s = it->find("rep_sources"); s != it->end())
        c.encoding.rep_sources = parse_rep_sources(s->get<std::string>());
      if (auto s = it->find("rep_scaling"); s != it->end())
        c.encoding.rep_scaling = parse_rep_scaling(s->get<std::string>());
    }
    if (auto it = j.find("models"); it != j.end()) {
      if (auto m = it->find("select"); m != it->end())
        c.select_hyper = hyper_from_json(*m, c.select_hyper);
      if (auto m = it->find("play"); m != it->end())
        c.play_hyper = hyper_from_json(*m, c.play_hyper);
      if (auto m = it->find("punish"); m != it->end())
        c.punish_hyper = hyper_from_json(*m, c.punish_hyper);
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad mechanism config: ") + e.what());
  }
}

// ---- overrides ----------------------------------------------------------------------

Overrides overrides_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  Overrides o;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "preset") o.preset = v.get<std::string>();
      else if (key == "mode") o.mode = parse_mode(v.get<std::string>());
      else if (key == "scheme") o.scheme = v.get<int>();
      else if (key == "episodes") o.episodes = v.get<std::size_t>();
      else if (key == "rounds") o.rounds = v.get<std::size_t>();
      else if (key == "pop_size") o.pop_size = v.get<std::size_t>();
      else if (key == "repeats") o.repeats = v.get<std::size_t>();
      else if (key == "hidden_dim") o.hidden = v.get<std::size_t>();
      else if (key == "jobs") o.jobs = v.get<std::size_t>();
      else if (key == "seed") o.seed = v.get<std::uint64_t>();
      else if (key == "rep_sources") o.rep_sources = parse_rep_sources(v.get<std::string>());
      else if (key == "rep_in_play_state") o.rep_in_play_state = v.get<bool>();
      else if (key == "rep_in_punish_state") o.rep_in_punish_state = v.get<bool>();
      else if (key == "rep_scaling") o.rep_scaling = parse_rep_scaling(v.get<std::string>());
      else if (key == "out") o.out = v.get<std::string>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return o;
}

Overrides load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return overrides_from_json(j);
}

Overrides merge(Overrides b, const Overrides& t) {
  auto take = [](auto& dst, const auto& src) {
    if (src) dst = src;
  };
  take(b.preset, t.preset);
  take(b.mode, t.mode);
  take(b.scheme, t.scheme);
  take(b.episodes, t.episodes);
  take(b.rounds, t.rounds);
  take(b.pop_size, t.pop_size);
  take(b.repeats, t.repeats);
  take(b.hidden, t.hidden);
  take(b.jobs, t.jobs);
  take(b.seed, t.seed);
  take(b.rep_sources, t.rep_sources);
  take(b.rep_in_play_state, t.rep_in_play_state);
  take(b.rep_in_punish_state, t.rep_in_punish_state);
  take(b.rep_scaling, t.rep_scaling);
  take(b.out, t.out);
  return b;
}

// ---- presets ------------------------------------------------------------------------

namespace {

Variant mode_variant(Mode m, const std::string& suffix = "") {
  return {std::string(to_string(m)) + suffix, MechanismConfig::for_mode(m)};
}

std::vector<Variant> six_modes(int scheme) {
  std::vector<Variant> v;
  for (Mode m : kMainModes) {
    auto var = mode_variant(m);
    var.config.scheme = RewardScheme::from_number(scheme);
    v.push_back(std::move(var));
  }
  return v;
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"main-six",      "scheme1",   "baseline-none",
                                              "rep-sources",   "rep-in-states", "pop-sizes",
                                              "hidden-64"};
  return names;
}

Preset make_preset(std::string_view name) {
  Preset p;
  p.name = std::string(name);
  if (name == "main-six") {
    p.description = "the six punishment/selection combinations, just-punishment scheme 2";
    p.variants = six_modes(2);
  } else if (name == "scheme1") {
    p.description = "the six combinations under scheme 1 (just punishment is a net loss)";
    p.variants = six_modes(1);
  } else if (name == "baseline-none") {
    p.description = "no punishment and no partner selection";
    p.variants = {mode_variant(Mode::NONE)};
  } else if (name == "rep-sources") {
    p.description = "reputation from play, punishment or both (TPP-S, DP-S)";
    for (Mode m : {Mode::TPP_S, Mode::DP_S})
      for (RepSources s : {RepSources::Both, RepSources::PlayOnly, RepSources::PunishOnly}) {
        auto v = mode_variant(m, "_rep-" + std::string(to_string(s)));
        v.config.encoding.rep_sources = s;
        p.variants.push_back(std::move(v));
      }
  } else if (name == "rep-in-states") {
    p.description = "reputation in the play state, punish state, both or neither (TPP-S, DP-S)";
    for (Mode m : {Mode::TPP_S, Mode::DP_S})
      for (auto [play, punish, tag] : {std::tuple{false, false, "none"},
                                       std::tuple{true, false, "play"},
                                       std::tuple{false, true, "punish"},
                                       std::tuple{true, true, "both"}}) {
        auto v = mode_variant(m, std::string("_state-") + tag);
        v.config.encoding.rep_in_play_state = play;
        v.config.encoding.rep_in_punish_state = punish;
        p.variants.push_back(std::move(v));
      }
  } else if (name == "pop-sizes") {
    p.description = "population sizes 5 to 30 (TPP-S, DP-S)";
    for (Mode m : {Mode::TPP_S, Mode::DP_S})
      for (std::size_t n : {5, 10, 15, 20, 25, 30}) {
        auto v = mode_variant(m, "_N" + std::to_string(n));
        v.config.population = n;
        p.variants.push_back(std::move(v));
      }
  } else if (name == "hidden-64") {
    p.description = "the six combinations with 64 hidden units";
    p.variants = six_modes(2);
    for (auto& v : p.variants) v.config.hidden = 64;
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }
  return p;
}

// ---- plans & manifests --------------------------------------------------------------

namespace {

void apply_overrides(MechanismConfig& c, const Overrides& o) {
  if (o.scheme) c.scheme = RewardScheme::from_number(*o.scheme);
  if (o.episodes) c.episodes = *o.episodes;
  if (o.rounds) c.rounds = *o.rounds;
  if (o.pop_size) c.population = *o.pop_size;
  if (o.hidden) c.hidden = *o.hidden;
  if (o.rep_sources) c.encoding.rep_sources = *o.rep_sources;
  if (o.rep_in_play_state) c.encoding.rep_in_play_state = *o.rep_in_play_state;
  if (o.rep_in_punish_state) c.encoding.rep_in_punish_state = *o.rep_in_punish_state;
  if (o.rep_scaling) c.encoding.rep_scaling = *o.rep_scaling;
}

fs::path default_out_root() {
  if (const char* env = std::getenv(kOutputEnv); env != nullptr && *env != '\0') return env;
  return "runs";
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string repeat_tag(std::size_t r) {
  std::ostringstream os;
  os << 'r' << std::setw(2) << std::setfill('0') << r;
  return os.str();
}

}  // namespace

ExperimentPlan plan_experiment(const Overrides& o) {
  ExperimentPlan plan;
  if (o.preset) {
    Preset p = make_preset(*o.preset);
    plan.name = p.name;
    plan.variants = std::move(p.variants);
    if (o.mode) {
      std::erase_if(plan.variants, [&](const Variant& v) { return v.config.mode != *o.mode; });
      if (plan.variants.empty())
        throw ConfigError("preset '" + plan.name + "' has no " + std::string(to_string(*o.mode)) +
                          " variant");
    }
  } else {
    const Mode m = o.mode.value_or(Mode::DP);
    plan.name = std::string(to_string(m));
    plan.variants = {mode_variant(m)};
  }
  for (auto& v : plan.variants) {
    apply_overrides(v.config, o);
    v.config.validate();
  }
  plan.repeats = o.repeats.value_or(20);
  if (plan.repeats == 0) throw ConfigError("repeats must be positive");
  plan.seed = o.seed.value_or(0);
  plan.jobs = o.jobs.value_or(0);
  plan.out = o.out ? fs::path(*o.out) : default_out_root() / plan.name;
  return plan;
}

fs::path raw_path(const ExperimentPlan& plan, std::size_t v, std::size_t r) {
  return plan.out / "raw" / (plan.variants[v].label + "_" + repeat_tag(r) + ".csv");
}

fs::path aggregate_path(const ExperimentPlan& plan, std::size_t v) {
  return plan.out / "aggregate" / (plan.variants[v].label + ".csv");
}

fs::path manifest_path(const ExperimentPlan& plan) { return plan.out / "manifest.json"; }

json manifest_json(const ExperimentPlan& plan) {
  json variants = json::array();
  for (std::size_t v = 0; v < plan.variants.size(); ++v) {
    json seeds = json::array(), raws = json::array();
    for (std::size_t r = 0; r < plan.repeats; ++r) {
      seeds.push_back(derive_seed(plan.seed, r));
      raws.push_back(raw_path(plan, v, r).string());
    }
    json entry{{"label", plan.variants[v].label},
               {"config", to_json(plan.variants[v].config)},
               {"seeds", seeds},
               {"raw", raws}};
    entry["aggregate"] = plan.repeats >= 2 ? json(aggregate_path(plan, v).string()) : json();
    variants.push_back(std::move(entry));
  }
  return {{"software", {{"name", "ipdsim"}, {"version", std::string(kSoftwareVersion)}}},
          {"experiment", plan.name},
          {"master_seed", plan.seed},
          {"seed_derivation", "seed[r] = splitmix64(master_seed + (r + 1) * 0x9E3779B97F4A7C15)"},
          {"repeats", plan.repeats},
          {"jobs", plan.jobs},
          {"out", plan.out.string()},
          {"variants", variants}};
}

ExperimentPlan plan_from_manifest(const json& m) {
  try {
    ExperimentPlan plan;
    plan.name = m.at("experiment").get<std::string>();
    plan.seed = m.at("master_seed").get<std::uint64_t>();
    plan.repeats = m.at("repeats").get<std::size_t>();
    plan.jobs = m.value("jobs", std::size_t{0});
    plan.out = m.at("out").get<std::string>();
    for (const auto& v : m.at("variants")) {
      Variant var{v.at("label").get<std::string>(), mechanism_from_json(v.at("config"))};
      var.config.validate();
      plan.variants.push_back(std::move(var));
    }
    return plan;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad manifest: ") + e.what());
  }
}

// ---- CSV ----------------------------------------------------------------------------

std::string format_number(std::optional<double> v) {
  if (!v) return {};
  char buf[32];
  const double x = *v == 0.0 ? 0.0 : *v;  // no "-0"
  auto res = std::to_chars(std::begin(buf), std::end(buf), x);
  return std::string(buf, res.ptr);
}

void write_raw_csv(std::ostream& os, const MechanismConfig& cfg, std::size_t repeat,
                   std::span<const EpisodeMetrics> rows) {
  os << kRawHeader << '\n';
  const std::string prefix = "," + std::to_string(repeat) + "," + std::string(to_string(cfg.mode)) +
                             "," + std::to_string(cfg.scheme.number()) + "," +
                             std::to_string(cfg.population);
  for (const auto& r : rows) {
    os << r.episode << prefix;
    for (Metric m : kAllMetrics) os << ',' << format_number(metric_value(r, m));
    os << '\n';
  }
}

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_num(std::string_view s, std::size_t line) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw InvalidInput("raw CSV line " + std::to_string(line) + ": bad number '" +
                       std::string(s) + "'");
  return v;
}

void set_metric(EpisodeMetrics& r, Metric m, std::optional<double> v) {
  switch (m) {
    case Metric::Cooperation: r.cooperation_pct = v; break;
    case Metric::CooperatorSelection: r.cooperator_selection_pct = v; break;
    case Metric::Punishment: r.punishment_pct = v; break;
    case Metric::SelectedPunisher: r.selected_punisher_pct = v; break;
    case Metric::JustRatio: r.just_ratio_pct = v; break;
    case Metric::JustPunisherSelection: r.just_punisher_selection_pct = v; break;
    case Metric::SocietalReward: r.societal_reward = v.value_or(0.0); break;
    case Metric::SocietalReputation: r.societal_reputation = v.value_or(0.0); break;
  }
}

}  // namespace

RawTable read_raw_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kRawHeader)
    throw InvalidInput("raw CSV header does not match the expected schema");
  RawTable t;
  std::size_t n = 1;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 5 + kAllMetrics.size())
      throw InvalidInput("raw CSV line " + std::to_string(n) + " has " +
                         std::to_string(f.size()) + " fields");
    EpisodeMetrics r;
    r.episode = parse_num<std::size_t>(f[0], n);
    if (t.rows.empty()) {
      t.repeat = parse_num<std::size_t>(f[1], n);
      t.mode = std::string(f[2]);
      t.scheme = parse_num<int>(f[3], n);
      t.pop_size = parse_num<std::size_t>(f[4], n);
    }
    for (std::size_t i = 0; i < kAllMetrics.size(); ++i) {
      const auto s = f[5 + i];
      set_metric(r, kAllMetrics[i],
                 s.empty() ? std::nullopt : std::optional<double>(parse_num<double>(s, n)));
    }
    t.rows.push_back(r);
  }
  return t;
}

RawTable read_raw_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFiles({path});
  return read_raw_csv(in);
}

void write_aggregate_csv(std::ostream& os, std::string_view label,
                         std::span<const std::vector<EpisodeMetrics>> repeats, std::size_t window) {
  if (repeats.size() < 2) throw ConfigError("aggregation needs at least two repeats");
  os << kAggregateHeader << '\n';
  std::vector<Series> smoothed(repeats.size());
  for (Metric m : kAllMetrics) {
    for (std::size_t r = 0; r < repeats.size(); ++r)
      smoothed[r] = rolling_mean(extract(repeats[r], m), window);
    const auto agg = aggregate_ci(smoothed);
    const auto name = metric_name(m);
    for (std::size_t e = 0; e < agg.mean.size(); ++e)
      os << label << ',' << repeats[0][e].episode << ',' << name << ','
         << format_number(agg.mean[e]) << ',' << format_number(agg.ci_low[e]) << ','
         << format_number(agg.ci_high[e]) << '\n';
  }
}

namespace {

std::string join_paths(const std::vector<fs::path>& paths) {
  std::string s;
  for (const auto& p : paths) s += "\n  " + p.string();
  return s;
}

// Write to a sibling temp file then rename, so readers never see half a file.
template <typename F>
void write_file(const fs::path& path, F&& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    body(out);
    if (!out) throw ConfigError("error writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

MissingFiles::MissingFiles(std::vector<fs::path> paths)
    : std::runtime_error("missing repeat files:" + join_paths(paths)), paths_(std::move(paths)) {}

void aggregate_files(std::span<const fs::path> inputs, std::string_view label,
                     const fs::path& out) {
  std::vector<fs::path> missing;
  for (const auto& p : inputs)
    if (!fs::is_regular_file(p)) missing.push_back(p);
  if (!missing.empty()) throw MissingFiles(std::move(missing));
  std::vector<std::vector<EpisodeMetrics>> repeats;
  for (const auto& p : inputs) repeats.push_back(read_raw_csv(p).rows);
  for (const auto& r : repeats)
    if (r.size() != repeats.front().size())
      throw InvalidInput("repeat files have different episode counts");
  write_file(out, [&](std::ostream& os) { write_aggregate_csv(os, label, repeats); });
}

void aggregate_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw MissingFiles({manifest});
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw ConfigError("manifest is not valid JSON: " + std::string(e.what()));
  }
  try {
    std::vector<fs::path> missing;
    for (const auto& v : m.at("variants"))
      for (const auto& p : v.at("raw"))
        if (!fs::is_regular_file(p.get<std::string>())) missing.push_back(p.get<std::string>());
    if (!missing.empty()) throw MissingFiles(std::move(missing));
    for (const auto& v : m.at("variants")) {
      if (v.at("aggregate").is_null()) continue;
      std::vector<fs::path> raws;
      for (const auto& p : v.at("raw")) raws.emplace_back(p.get<std::string>());
      aggregate_files(raws, v.at("label").get<std::string>(), v.at("aggregate").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ConfigError("bad manifest: " + std::string(e.what()));
  }
}

// ---- running ------------------------------------------------------------------------

ExperimentFailure::ExperimentFailure(const std::string& what, fs::path snapshot)
    : NumericalFailure(what), snapshot_(std::move(snapshot)) {}

namespace {

// Runs f(i) for i in [0, n) on up to `jobs` threads. Every task runs even if some fail;
// the failure of the lowest index is rethrown so the outcome does not depend on timing.
template <typename F>
void parallel_tasks(std::size_t n, std::size_t jobs, F&& f) {
  std::vector<std::exception_ptr> errors(n);
  const int threads = static_cast<int>(jobs == 0 ? omp_get_max_threads() : jobs);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      f(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

RunResult run_experiment(const ExperimentPlan& plan, std::ostream* log) {
  if (plan.variants.empty()) throw ConfigError("experiment has no variants");
  const bool persist = !plan.out.empty();
  json manifest = manifest_json(plan);
  manifest["started_at"] = utc_now();
  if (persist) {
    fs::create_directories(plan.out);
    write_file(manifest_path(plan), [&](std::ostream& os) { os << manifest.dump(2) << '\n'; });
  }

  const std::size_t nv = plan.variants.size(), nr = plan.repeats;
  RunResult out;
  out.results.assign(nv, std::vector<std::vector<EpisodeMetrics>>(nr));
  std::mutex log_mu;

  parallel_tasks(nv * nr, plan.jobs, [&](std::size_t task) {
    const std::size_t v = task / nr, r = task % nr;
    MechanismConfig cfg = plan.variants[v].config;
    cfg.seed = derive_seed(plan.seed, r);
    const auto t0 = std::chrono::steady_clock::now();
    SimulationResult sim;
    try {
      sim = run_simulation(cfg);
    } catch (const SimulationFailure& err) {
      fs::path snap;
      if (persist) {
        snap = plan.out / "failures" / (plan.variants[v].label + "_" + repeat_tag(r) + ".json");
        write_file(snap, [&](std::ostream& os) {
          os << json{{"error", err.what()},
                     {"episode", err.episode()},
                     {"variant", plan.variants[v].label},
                     {"repeat", r},
                     {"config", to_json(cfg)},
                     {"state", err.snapshot()}}
                    .dump()
             << '\n';
        });
      }
      throw ExperimentFailure(plan.variants[v].label + " repeat " + std::to_string(r) +
                                  " failed at episode " + std::to_string(err.episode()) + ": " +
                                  err.what(),
                              snap);
    }
    if (persist)
      write_file(raw_path(plan, v, r),
                 [&](std::ostream& os) { write_raw_csv(os, cfg, r, sim.metrics); });
    out.results[v][r] = std::move(sim.metrics);
    if (log) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::lock_guard lock(log_mu);
      *log << plan.variants[v].label << ' ' << repeat_tag(r) << " done in " << std::fixed
           << std::setprecision(1) << secs << "s\n"
           << std::defaultfloat;
    }
  });

  if (persist) {
    if (nr >= 2)
      for (std::size_t v = 0; v < nv; ++v)
        write_file(aggregate_path(plan, v), [&](std::ostream& os) {
          write_aggregate_csv(os, plan.variants[v].label, out.results[v]);
        });
    manifest["finished_at"] = utc_now();
    write_file(manifest_path(plan), [&](std::ostream& os) { os << manifest.dump(2) << '\n'; });
  }
  return out;
}

// ---- random search ------------------------------------------------------------------

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  // numpy: lo + i * step, with the last point pinned to hi.
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + static_cast<double>(i) * step;
  v[n - 1] = hi;
  return v;
}

SearchSpace SearchSpace::published() {
  SearchSpace s;
  for (int x = 11; x < 21; ++x) s.buffer_sizes.push_back(std::size_t{1} << x);
  for (int x = 10; x < 19; ++x) s.batch_sizes.push_back(std::size_t{1} << x);
  for (std::size_t t = 500; t <= 5000; t += 500) s.target_updates.push_back(t);
  s.eps_min = linspace(1e-4, 1.0, 10);
  s.eps_max = linspace(1e-4, 1.0, 10);
  s.eps_decay = linspace(1e-4, 0.9, 10);
  s.gammas = {0.8, 0.9, 0.99};
  s.learning_rates = {0.001, 0.01, 0.1};
  return s;
}

namespace {

template <typename T>
T pick(const std::vector<T>& grid, Rng& rng) {
  if (grid.empty()) throw ConfigError("empty search grid");
  std::uniform_int_distribution<std::size_t> d(0, grid.size() - 1);
  return grid[d(rng)];
}

ModelKnobs sample_knobs(const SearchSpace& s, Rng& rng) {
  ModelKnobs k;
  k.buffer = pick(s.buffer_sizes, rng);
  k.eps_min = pick(s.eps_min, rng);
  k.eps_max = pick(s.eps_max, rng);
  k.eps_decay = pick(s.eps_decay, rng);
  k.learning_rate = pick(s.learning_rates, rng);
  if (k.eps_min > k.eps_max) std::swap(k.eps_min, k.eps_max);
  return k;
}

void apply_knobs(ModelHyper& h, const ModelKnobs& k, const TrialParams& t) {
  h.buffer_capacity = k.buffer;
  h.eps_min = k.eps_min;
  h.eps_max = k.eps_max;
  h.eps_decay = k.eps_decay;
  h.learning_rate = k.learning_rate;
  h.batch_size = t.batch_size;
  h.target_update = t.target_update;
  h.gamma = t.gamma;
}

}  // namespace

void TrialParams::apply(MechanismConfig& cfg) const {
  apply_knobs(cfg.select_hyper, select, *this);
  apply_knobs(cfg.play_hyper, play, *this);
  apply_knobs(cfg.punish_hyper, punish, *this);
}

TrialParams sample_trial(const SearchSpace& space, Rng& rng) {
  TrialParams t;
  t.batch_size = pick(space.batch_sizes, rng);
  t.target_update = pick(space.target_updates, rng);
  t.gamma = pick(space.gammas, rng);
  t.select = sample_knobs(space, rng);
  t.play = sample_knobs(space, rng);
  t.punish = sample_knobs(space, rng);
  return t;
}

std::vector<TrialResult> hyper_search(const SearchSpace& space, const MechanismConfig& base,
                                      const SearchOptions& opt, std::ostream* log) {
  if (opt.trials == 0) throw ConfigError("search needs at least one trial");
  if (opt.repeats == 0 || opt.episodes == 0)
    throw ConfigError("search repeats and episodes must be positive");
  Rng rng(opt.seed);
  std::vector<TrialResult> results(opt.trials);
  for (std::size_t t = 0; t < opt.trials; ++t) {
    results[t].trial = t;
    results[t].params = sample_trial(space, rng);
  }
  // (trial, repeat) tasks; each fills its own slot.
  std::vector<double> means(opt.trials * opt.repeats);
  std::mutex log_mu;
  parallel_tasks(means.size(), opt.jobs, [&](std::size_t task) {
    const std::size_t t = task / opt.repeats, r = task % opt.repeats;
    MechanismConfig cfg = base;
    cfg.episodes = opt.episodes;
    results[t].params.apply(cfg);
    cfg.seed = derive_seed(derive_seed(opt.seed, t), r);
    cfg.validate();
    const auto sim = run_simulation(cfg);
    double sum = 0.0;
    for (const auto& m : sim.metrics) sum += m.societal_reward;
    means[task] = sum / static_cast<double>(sim.metrics.size());
    if (log) {
      std::lock_guard lock(log_mu);
      *log << "trial " << t << " repeat " << r << " mean reward " << means[task] << '\n';
    }
  });
  for (std::size_t t = 0; t < opt.trials; ++t) {
    double sum = 0.0;
    for (std::size_t r = 0; r < opt.repeats; ++r) sum += means[t * opt.repeats + r];
    results[t].score = sum / static_cast<double>(opt.repeats);
  }
  std::stable_sort(results.begin(), results.end(), [](const TrialResult& a, const TrialResult& b) {
    return a.score > b.score;
  });
  return results;
}

void write_search_csv(std::ostream& os, std::span<const TrialResult> ranked) {
  os << "rank,trial,score,batch_size,target_update,gamma";
  for (const char* m : {"select", "play", "punish"})
    for (const char* k : {"buffer", "eps_min", "eps_max", "eps_decay", "learning_rate"})
      os << ',' << m << '_' << k;
  os << '\n';
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& r = ranked[i];
    const auto& p = r.params;
    os << i + 1 << ',' << r.trial << ',' << format_number(r.score) << ',' << p.batch_size << ','
       << p.target_update << ',' << format_number(p.gamma);
    for (const ModelKnobs* k : {&p.select, &p.play, &p.punish})
      os << ',' << k->buffer << ',' << format_number(k->eps_min) << ','
         << format_number(k->eps_max) << ',' << format_number(k->eps_decay) << ','
         << format_number(k->learning_rate);
    os << '\n';
  }
}

}  // namespace ipd
