#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "romlab/blocked_path.hpp"
#include "romlab/discretization.hpp"
#include "romlab/ensemble.hpp"
#include "romlab/errors.hpp"
#include "romlab/obstacle_field.hpp"
#include "romlab/parabolic_solver.hpp"
#include "romlab/probability_lab.hpp"
#include "romlab/rng.hpp"

// Configuration-driven experiment runner. Every mode writes a manifest,
// result CSVs and plot-data CSVs into the output directory. Ensemble modes
// append each finished task to partial.jsonl so an interrupted run resumes
// where it stopped.

namespace romlab {

inline constexpr const char *version = "0.1.0";

enum class Mode { evolve, stationary, lemmas, crossing, phase_sweep, report };

inline const char *mode_name(Mode m) {
  switch (m) {
  case Mode::evolve: return "evolve";
  case Mode::stationary: return "stationary";
  case Mode::lemmas: return "lemmas";
  case Mode::crossing: return "crossing";
  case Mode::phase_sweep: return "phase-sweep";
  case Mode::report: return "report";
  }
  return "?";
}

inline Mode parse_mode(const std::string &s) {
  for (Mode m : {Mode::evolve, Mode::stationary, Mode::lemmas, Mode::crossing,
                 Mode::phase_sweep, Mode::report})
    if (s == mode_name(m))
      return m;
  throw ConfigError("mode", "unknown mode '" + s + "'");
}

struct PdeSettings {
  double h = 0.05;
  double dt = 0.0; // 0 selects 0.4 h^2
  Scheme scheme = Scheme::explicit_euler;
  double t_end = 1.0;
  double t_max = 0.0; // 0 selects 50 N^2
  double tol = 1e-6;
  double snapshot_every = 0.0;
  Problem problem = Problem::auxiliary;
  bool implicit_fallback = false;
  /// Stationary mode also runs the PDE to its stationary limit.
  bool stationary = true;

  double time_step() const { return dt > 0.0 ? dt : default_dt_factor * h * h; }
};

struct RateSettings {
  std::optional<double> C0, lambda1, C_hat, C_tilde;
  double C = 0.0;   // constant in the predicted exponent
  double eta = 0.0;
};

struct ExperimentConfig {
  Mode mode = Mode::lemmas;
  FieldConfig field;
  int N = 8;
  std::vector<int> N_list{6, 10, 14, 18};
  double K = 1.0;
  TriangleHeight triangle = TriangleHeight::K_N_minus_1;
  std::uint64_t n_samples = 1;
  std::uint64_t seed = 0;
  unsigned workers = 0; // 0 selects default_workers()
  std::string output = "romlab_out";
  PathOptions solver;
  bool nonnegative_only = false;
  bool unit_cutoff = false;
  PdeSettings pde;
  std::vector<double> F_grid{0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0};
  RateSettings rate;

  unsigned worker_count() const { return workers ? workers : default_workers(); }
};

// ---------------------------------------------------------------------------
// Strict JSON schema

namespace detail {

class ObjectReader {
public:
  ObjectReader(const nlohmann::json &j, std::string path)
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      throw ConfigError(path_.empty() ? "config" : path_, "expected an object");
  }

  std::string where(const std::string &key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  template <class Fn> void on(const std::string &key, Fn &&fn) {
    known_.insert(key);
    auto it = j_.find(key);
    if (it != j_.end())
      fn(*it, where(key));
  }

  void finish() const {
    for (const auto &[key, value] : j_.items())
      if (!known_.count(key))
        throw ConfigError(where(key), "unknown key");
  }

private:
  const nlohmann::json &j_;
  std::string path_;
  std::set<std::string> known_;
};

inline double number(const nlohmann::json &v, const std::string &where) {
  if (!v.is_number())
    throw ConfigError(where, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x))
    throw ConfigError(where, "must be finite");
  return x;
}

inline double positive(const nlohmann::json &v, const std::string &where) {
  const double x = number(v, where);
  if (!(x > 0.0))
    throw ConfigError(where, "must be positive");
  return x;
}

inline double nonnegative(const nlohmann::json &v, const std::string &where) {
  const double x = number(v, where);
  if (!(x >= 0.0))
    throw ConfigError(where, "must be nonnegative");
  return x;
}

inline std::uint64_t unsigned_int(const nlohmann::json &v, const std::string &where) {
  if (v.is_number_unsigned())
    return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ConfigError(where, "expected a nonnegative integer");
}

inline int bounded_int(const nlohmann::json &v, const std::string &where, int lo,
                       int hi) {
  if (!v.is_number_integer())
    throw ConfigError(where, "expected an integer");
  const auto x = v.get<std::int64_t>();
  if (x < lo || x > hi)
    throw ConfigError(where, "must lie in [" + std::to_string(lo) + ", " +
                                 std::to_string(hi) + "]");
  return static_cast<int>(x);
}

inline bool boolean(const nlohmann::json &v, const std::string &where) {
  if (!v.is_boolean())
    throw ConfigError(where, "expected a boolean");
  return v.get<bool>();
}

inline std::string string(const nlohmann::json &v, const std::string &where) {
  if (!v.is_string())
    throw ConfigError(where, "expected a string");
  return v.get<std::string>();
}

inline std::optional<double> optional_positive(const nlohmann::json &v,
                                               const std::string &where) {
  if (v.is_null())
    return std::nullopt;
  return positive(v, where);
}

} // namespace detail

/// Parses a config object. Unknown keys, wrong types and out-of-range values
/// raise ConfigError naming the dotted field path.
inline ExperimentConfig parse_config(const nlohmann::json &j) {
  using namespace detail;
  ExperimentConfig c;
  ObjectReader top(j, "");
  bool seed_given = false;
  top.on("mode", [&](const auto &v, const auto &w) {
    try {
      c.mode = parse_mode(string(v, w));
    } catch (const ConfigError &) {
      throw ConfigError(w, "unknown mode");
    }
  });
  top.on("field", [&](const auto &v, const auto &) { c.field = field_config_from_json(v, "field"); });
  top.on("N", [&](const auto &v, const auto &w) { c.N = bounded_int(v, w, 1, 10000); });
  top.on("N_list", [&](const auto &v, const auto &w) {
    if (!v.is_array() || v.empty())
      throw ConfigError(w, "expected a nonempty array");
    c.N_list.clear();
    for (std::size_t k = 0; k < v.size(); ++k)
      c.N_list.push_back(bounded_int(v[k], w + "[" + std::to_string(k) + "]", 1, 10000));
    for (std::size_t k = 1; k < c.N_list.size(); ++k)
      if (c.N_list[k] <= c.N_list[k - 1])
        throw ConfigError(w, "must be strictly ascending");
  });
  top.on("K", [&](const auto &v, const auto &w) { c.K = positive(v, w); });
  top.on("n_samples", [&](const auto &v, const auto &w) {
    c.n_samples = unsigned_int(v, w);
    if (c.n_samples == 0)
      throw ConfigError(w, "must be positive");
  });
  top.on("seed", [&](const auto &v, const auto &w) {
    c.seed = unsigned_int(v, w);
    seed_given = true;
  });
  top.on("workers", [&](const auto &v, const auto &w) {
    c.workers = static_cast<unsigned>(bounded_int(v, w, 0, 4096));
  });
  top.on("output", [&](const auto &v, const auto &w) {
    c.output = string(v, w);
    if (c.output.empty())
      throw ConfigError(w, "must be nonempty");
  });
  top.on("solver", [&](const auto &v, const auto &w) {
    ObjectReader r(v, w);
    PathOptions &s = c.solver;
    r.on("tol_ode", [&](const auto &x, const auto &p) { s.tol_ode = positive(x, p); });
    r.on("tol_shoot", [&](const auto &x, const auto &p) { s.tol_shoot = positive(x, p); });
    r.on("tol_match", [&](const auto &x, const auto &p) { s.tol_match = positive(x, p); });
    r.on("step", [&](const auto &x, const auto &p) { s.step = nonnegative(x, p); });
    r.on("slope_max", [&](const auto &x, const auto &p) { s.slope_max = nonnegative(x, p); });
    r.on("band_steps", [&](const auto &x, const auto &p) { s.band_steps = bounded_int(x, p, 4, 100000); });
    r.on("coarse_factor", [&](const auto &x, const auto &p) { s.coarse_factor = bounded_int(x, p, 1, 64); });
    r.on("gap_samples", [&](const auto &x, const auto &p) { s.gap_samples = bounded_int(x, p, 2, 100000); });
    r.on("scan_points", [&](const auto &x, const auto &p) { s.scan_points = bounded_int(x, p, 2, 1000000); });
    r.on("max_refinements", [&](const auto &x, const auto &p) { s.max_refinements = bounded_int(x, p, 0, 30); });
    r.on("nonnegative_only", [&](const auto &x, const auto &p) { c.nonnegative_only = boolean(x, p); });
    r.on("unit_cutoff", [&](const auto &x, const auto &p) { c.unit_cutoff = boolean(x, p); });
    r.finish();
  });
  top.on("pde", [&](const auto &v, const auto &w) {
    ObjectReader r(v, w);
    PdeSettings &s = c.pde;
    r.on("h", [&](const auto &x, const auto &p) { s.h = positive(x, p); });
    r.on("dt", [&](const auto &x, const auto &p) { s.dt = nonnegative(x, p); });
    r.on("scheme", [&](const auto &x, const auto &p) {
      const std::string name = string(x, p);
      if (name == "explicit")
        s.scheme = Scheme::explicit_euler;
      else if (name == "semi-implicit")
        s.scheme = Scheme::semi_implicit;
      else
        throw ConfigError(p, "expected 'explicit' or 'semi-implicit'");
    });
    r.on("t_end", [&](const auto &x, const auto &p) { s.t_end = nonnegative(x, p); });
    r.on("t_max", [&](const auto &x, const auto &p) { s.t_max = nonnegative(x, p); });
    r.on("tol", [&](const auto &x, const auto &p) { s.tol = positive(x, p); });
    r.on("snapshot_every", [&](const auto &x, const auto &p) { s.snapshot_every = nonnegative(x, p); });
    r.on("problem", [&](const auto &x, const auto &p) {
      const std::string name = string(x, p);
      if (name == "original")
        s.problem = Problem::original;
      else if (name == "auxiliary")
        s.problem = Problem::auxiliary;
      else
        throw ConfigError(p, "expected 'original' or 'auxiliary'");
    });
    r.on("implicit_fallback", [&](const auto &x, const auto &p) { s.implicit_fallback = boolean(x, p); });
    r.on("stationary", [&](const auto &x, const auto &p) { s.stationary = boolean(x, p); });
    r.finish();
  });
  top.on("sweep", [&](const auto &v, const auto &w) {
    ObjectReader r(v, w);
    r.on("F_grid", [&](const auto &x, const auto &p) {
      if (!x.is_array() || x.empty())
        throw ConfigError(p, "expected a nonempty array");
      c.F_grid.clear();
      for (std::size_t k = 0; k < x.size(); ++k)
        c.F_grid.push_back(nonnegative(x[k], p + "[" + std::to_string(k) + "]"));
      for (std::size_t k = 1; k < c.F_grid.size(); ++k)
        if (c.F_grid[k] <= c.F_grid[k - 1])
          throw ConfigError(p, "must be strictly ascending");
    });
    r.finish();
  });
  top.on("crossing", [&](const auto &v, const auto &w) {
    ObjectReader r(v, w);
    r.on("triangle", [&](const auto &x, const auto &p) {
      const std::string name = string(x, p);
      if (name == "K(N-1)")
        c.triangle = TriangleHeight::K_N_minus_1;
      else if (name == "KN")
        c.triangle = TriangleHeight::K_N;
      else
        throw ConfigError(p, "expected 'K(N-1)' or 'KN'");
    });
    r.finish();
  });
  top.on("rate", [&](const auto &v, const auto &w) {
    ObjectReader r(v, w);
    RateSettings &s = c.rate;
    r.on("C0", [&](const auto &x, const auto &p) { s.C0 = optional_positive(x, p); });
    r.on("lambda1", [&](const auto &x, const auto &p) { s.lambda1 = optional_positive(x, p); });
    r.on("C_hat", [&](const auto &x, const auto &p) { s.C_hat = optional_positive(x, p); });
    r.on("C_tilde", [&](const auto &x, const auto &p) { s.C_tilde = optional_positive(x, p); });
    r.on("C", [&](const auto &x, const auto &p) { s.C = number(x, p); });
    r.on("eta", [&](const auto &x, const auto &p) { s.eta = number(x, p); });
    r.finish();
  });
  top.finish();

  if (seed_given)
    c.field.seed = c.seed;
  else
    c.seed = c.field.seed;
  if (c.mode == Mode::crossing && c.n_samples < 100)
    throw ConfigError("n_samples", "crossing mode needs at least 100 samples");
  return c;
}

inline std::string scheme_name(Scheme s) {
  return s == Scheme::explicit_euler ? "explicit" : "semi-implicit";
}

/// Canonical config echo. Re-parsing it yields the same config.
inline nlohmann::json to_json(const ExperimentConfig &c) {
  auto opt = [](const std::optional<double> &x) {
    return x ? nlohmann::json(*x) : nlohmann::json(nullptr);
  };
  nlohmann::json field;
  to_json(field, c.field);
  const PathOptions &s = c.solver;
  return {
      {"mode", mode_name(c.mode)},
      {"field", field},
      {"N", c.N},
      {"N_list", c.N_list},
      {"K", c.K},
      {"n_samples", c.n_samples},
      {"seed", c.seed},
      {"workers", c.workers},
      {"output", c.output},
      {"solver",
       {{"tol_ode", s.tol_ode},
        {"tol_shoot", s.tol_shoot},
        {"tol_match", s.tol_match},
        {"step", s.step},
        {"slope_max", s.slope_max},
        {"band_steps", s.band_steps},
        {"coarse_factor", s.coarse_factor},
        {"gap_samples", s.gap_samples},
        {"scan_points", s.scan_points},
        {"max_refinements", s.max_refinements},
        {"nonnegative_only", c.nonnegative_only},
        {"unit_cutoff", c.unit_cutoff}}},
      {"pde",
       {{"h", c.pde.h},
        {"dt", c.pde.dt},
        {"scheme", scheme_name(c.pde.scheme)},
        {"t_end", c.pde.t_end},
        {"t_max", c.pde.t_max},
        {"tol", c.pde.tol},
        {"snapshot_every", c.pde.snapshot_every},
        {"problem", c.pde.problem == Problem::original ? "original" : "auxiliary"},
        {"implicit_fallback", c.pde.implicit_fallback},
        {"stationary", c.pde.stationary}}},
      {"sweep", {{"F_grid", c.F_grid}}},
      {"crossing",
       {{"triangle", c.triangle == TriangleHeight::K_N_minus_1 ? "K(N-1)" : "KN"}}},
      {"rate",
       {{"C0", opt(c.rate.C0)},
        {"lambda1", opt(c.rate.lambda1)},
        {"C_hat", opt(c.rate.C_hat)},
        {"C_tilde", opt(c.rate.C_tilde)},
        {"C", c.rate.C},
        {"eta", c.rate.eta}}}};
}

/// Applies `key=value` to a config object. The key is a dotted path; the
/// value is parsed as JSON and falls back to a plain string.
inline void apply_override(nlohmann::json &j, const std::string &assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override", "expected key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded())
    value = text;
  nlohmann::json *node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty())
      throw ConfigError("override", "empty path component in '" + key + "'");
    if (!node->is_object()) {
      if (!node->is_null())
        throw ConfigError(key.substr(0, start ? start - 1 : 0), "not an object");
      *node = nlohmann::json::object();
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

inline nlohmann::json load_config_file(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("config", "cannot open '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded())
    throw ConfigError("config", "'" + path + "' is not valid JSON");
  return j;
}

// ---------------------------------------------------------------------------
// Output helpers

namespace detail {

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_text(const std::filesystem::path &p, const std::string &text) {
  std::ofstream out(p, std::ios::binary);
  if (!out)
    throw Error("cannot write " + p.string());
  out << text;
}

inline void write_json(const std::filesystem::path &p, const nlohmann::json &j) {
  write_text(p, j.dump(2) + "\n");
}

inline nlohmann::json finite_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Append-only per-task log. Lines are {"task": t, "result": ...}; a torn
/// last line from a crash is ignored on reload.
class TaskLog {
public:
  TaskLog(const std::filesystem::path &dir, const nlohmann::json &fingerprint)
      : path_(dir / "partial.jsonl") {
    const auto fp_path = dir / "partial.config.json";
    const std::string fp = fingerprint.dump();
    if (std::filesystem::exists(fp_path)) {
      std::ifstream in(fp_path);
      std::stringstream ss;
      ss << in.rdbuf();
      if (ss.str() != fp)
        throw ConfigError("output", "directory holds partial results of a "
                                    "different configuration");
      std::ifstream log(path_);
      std::string line;
      while (std::getline(log, line)) {
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("task") || !j.contains("result"))
          continue;
        done_[j["task"].get<std::size_t>()] = j["result"];
      }
    } else {
      write_text(fp_path, fp);
      std::ofstream(path_, std::ios::trunc);
    }
    out_.open(path_, std::ios::app | std::ios::binary);
  }

  const std::map<std::size_t, nlohmann::json> &done() const { return done_; }

  void append(std::size_t task, const nlohmann::json &result) {
    out_ << nlohmann::json{{"task", task}, {"result", result}}.dump() << '\n';
    out_.flush();
  }

private:
  std::filesystem::path path_;
  std::map<std::size_t, nlohmann::json> done_;
  std::ofstream out_;
};

struct EnsembleRun {
  std::vector<nlohmann::json> results; // task order
  std::size_t resumed = 0;
};

/// Runs the missing tasks of a resumable ensemble.
inline EnsembleRun run_ensemble(const std::filesystem::path &dir,
                                const ExperimentConfig &cfg, std::size_t count,
                                const std::function<nlohmann::json(std::size_t)> &task) {
  nlohmann::json fp = to_json(cfg);
  fp.erase("workers");
  fp.erase("output");
  TaskLog log(dir, fp);
  std::vector<std::size_t> missing;
  for (std::size_t t = 0; t < count; ++t)
    if (!log.done().count(t))
      missing.push_back(t);
  EnsembleRun run;
  run.resumed = count - missing.size();
  const auto fresh = run_indexed<nlohmann::json>(
      missing.size(), cfg.worker_count(),
      [&](std::size_t k) { return task(missing[k]); },
      [&](std::size_t k, const nlohmann::json &r) { log.append(missing[k], r); });
  run.results.resize(count);
  for (const auto &[t, r] : log.done())
    if (t < count)
      run.results[t] = r;
  for (std::size_t k = 0; k < missing.size(); ++k)
    run.results[missing[k]] = fresh[k];
  return run;
}

inline ObstacleGrid make_grid(const ExperimentConfig &cfg, std::uint64_t seed,
                              std::optional<double> F = std::nullopt) {
  FieldConfig fc = cfg.field;
  fc.seed = seed;
  if (F)
    fc.F = *F;
  return ObstacleGrid(fc).with_unit_cutoff(cfg.unit_cutoff);
}

inline GridFunction zero_data(const ExperimentConfig &cfg) {
  const double len = 2.0 * (cfg.N - cfg.field.delta);
  const auto cells = static_cast<std::size_t>(std::max(2.0, std::round(len / cfg.pde.h)));
  return GridFunction::dirichlet_zero(cfg.N, cfg.field.delta, cells);
}

inline StationaryOptions stationary_options(const ExperimentConfig &cfg,
                                            std::optional<double> height_limit) {
  StationaryOptions so;
  so.tol = cfg.pde.tol;
  so.t_max = cfg.pde.t_max;
  so.height_limit = height_limit;
  so.scheme = cfg.pde.scheme;
  return so;
}

inline const char *status_name(StationaryStatus s) {
  switch (s) {
  case StationaryStatus::stationary: return "stationary";
  case StationaryStatus::not_stationary: return "not_stationary";
  case StationaryStatus::height_exceeded: return "height_exceeded";
  }
  return "?";
}

inline std::string csv_bool(bool b) { return b ? "1" : "0"; }

} // namespace detail

struct RunSummary {
  std::vector<std::string> files;
  std::size_t tasks = 0;
  std::size_t resumed = 0;
  nlohmann::json report; // mode-specific headline numbers
};

// ---------------------------------------------------------------------------
// Modes

inline RunSummary run_evolve(const ExperimentConfig &cfg,
                             const std::filesystem::path &dir) {
  const ObstacleGrid grid = detail::make_grid(cfg, cfg.seed);
  SolverOptions so;
  so.scheme = cfg.pde.scheme;
  so.snapshot_every = cfg.pde.snapshot_every;
  so.implicit_fallback = cfg.pde.implicit_fallback;
  const auto traj = evolve(grid, cfg.pde.problem, detail::zero_data(cfg),
                           cfg.pde.t_end, cfg.pde.time_step(), so);
  {
    std::ofstream csv(dir / "trajectory.csv", std::ios::binary);
    write_trajectory_csv(csv, traj);
    std::ofstream bin(dir / "trajectory.bin", std::ios::binary);
    write_trajectory_binary(bin, traj);
  }
  RunSummary s;
  s.tasks = 1;
  s.files = {"trajectory.csv", "trajectory.bin", "evolve_summary.json"};
  s.report = {{"seed", cfg.seed},
              {"t_end", traj.back().t},
              {"steps", traj.stats.steps},
              {"max_cfl", traj.stats.max_cfl},
              {"snapshots", traj.snapshots.size()},
              {"final_max", traj.back().u.max()}};
  detail::write_json(dir / "evolve_summary.json", s.report);
  return s;
}

inline RunSummary run_stationary(const ExperimentConfig &cfg,
                                 const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir / "paths");
  auto task = [&](std::size_t t) -> nlohmann::json {
    const std::uint64_t seed = rng::split_seed(cfg.seed, t);
    const ObstacleGrid grid = detail::make_grid(cfg, seed);
    const auto search = find_dirichlet_paths(grid, cfg.N, cfg.solver, cfg.nonnegative_only);
    nlohmann::json r{{"seed", seed}, {"no_solution", search.no_solution},
                     {"shots", search.shots}, {"paths", nlohmann::json::array()}};
    for (std::size_t k = 0; k < search.paths.size(); ++k) {
      const auto &p = search.paths[k];
      const std::string stem = "task" + std::to_string(t) + "_path" + std::to_string(k);
      {
        std::ofstream csv(dir / "paths" / (stem + ".csv"), std::ios::binary);
        write_path_csv(csv, p);
      }
      detail::write_json(dir / "paths" / (stem + ".json"), path_summary(p));
      const auto d = discretize(p);
      r["paths"].push_back({{"slope0", p.slope0},
                            {"terminal", p.terminal},
                            {"center", p.at(0).v_in},
                            {"min_value", p.min_value()},
                            {"nonnegative", p.nonnegative()},
                            {"validated", p.validated},
                            {"junction_residual", p.junction_residual},
                            {"ode_error", p.ode_error},
                            {"v_bar_center", d.bar(0)}});
    }
    if (cfg.pde.stationary) {
      const auto res = stationary_limit(grid, Problem::auxiliary, detail::zero_data(cfg),
                                        cfg.pde.time_step(),
                                        detail::stationary_options(cfg, std::nullopt));
      {
        std::ofstream csv(dir / "paths" / ("task" + std::to_string(t) + "_pde.csv"),
                          std::ios::binary);
        csv << "x,u\n";
        for (std::size_t k = 0; k < res.u.values.size(); ++k)
          csv << detail::fmt(res.u.x(k)) << ',' << detail::fmt(res.u.values[k]) << '\n';
      }
      r["pde"] = {{"status", detail::status_name(res.status)},
                  {"t", res.t},
                  {"steps", res.steps},
                  {"rate", res.rate},
                  {"max", res.u.max()}};
    }
    return r;
  };
  const auto run = detail::run_ensemble(dir, cfg, cfg.n_samples, task);

  std::ostringstream paths, pde;
  paths << "task,seed,path,slope0,terminal,min_value,nonnegative,validated,"
           "junction_residual,ode_error,v_bar_center\n";
  pde << "task,seed,status,t,steps,rate,max\n";
  std::size_t n_paths = 0, none = 0;
  for (std::size_t t = 0; t < run.results.size(); ++t) {
    const auto &r = run.results[t];
    const auto seed = r["seed"].get<std::uint64_t>();
    none += r["no_solution"].get<bool>() ? 1 : 0;
    for (std::size_t k = 0; k < r["paths"].size(); ++k) {
      const auto &p = r["paths"][k];
      ++n_paths;
      paths << t << ',' << seed << ',' << k << ',' << detail::fmt(p["slope0"])
            << ',' << detail::fmt(p["terminal"]) << ',' << detail::fmt(p["min_value"])
            << ',' << detail::csv_bool(p["nonnegative"]) << ','
            << detail::csv_bool(p["validated"]) << ','
            << detail::fmt(p["junction_residual"]) << ','
            << detail::fmt(p["ode_error"]) << ',' << detail::fmt(p["v_bar_center"])
            << '\n';
    }
    if (r.contains("pde")) {
      const auto &q = r["pde"];
      pde << t << ',' << seed << ',' << q["status"].get<std::string>() << ','
          << detail::fmt(q["t"]) << ',' << q["steps"].get<std::uint64_t>() << ','
          << detail::fmt(q["rate"]) << ',' << detail::fmt(q["max"]) << '\n';
    }
  }
  detail::write_text(dir / "stationary_paths.csv", paths.str());
  RunSummary s;
  s.files = {"stationary_paths.csv", "paths/"};
  if (cfg.pde.stationary) {
    detail::write_text(dir / "stationary_pde.csv", pde.str());
    s.files.push_back("stationary_pde.csv");
  }
  s.tasks = run.results.size();
  s.resumed = run.resumed;
  s.report = {{"paths", n_paths}, {"no_solution", none}};
  return s;
}

inline RunSummary run_lemmas(const ExperimentConfig &cfg,
                             const std::filesystem::path &dir) {
  const double tol = lemma_tolerance(cfg.solver.tol_ode);
  auto task = [&](std::size_t t) -> nlohmann::json {
    const std::uint64_t seed = rng::split_seed(cfg.seed, t);
    const ObstacleGrid grid = detail::make_grid(cfg, seed);
    const auto search = find_dirichlet_paths(grid, cfg.N, cfg.solver, cfg.nonnegative_only);
    nlohmann::json r{{"seed", seed}, {"no_solution", search.no_solution},
                     {"paths", nlohmann::json::array()}};
    for (std::size_t k = 0; k < search.paths.size(); ++k) {
      const auto &p = search.paths[k];
      const auto d = discretize(p);
      const auto rep = verify_lemma_bounds(p, d, grid, tol);
      const auto interp = verify_interpolation_bound(p, d);
      std::ostringstream rows;
      for (const auto &row : rep.rows) {
        rows << t << ',' << k << ',';
        write_lemma_row(rows, row);
      }
      r["paths"].push_back(
          {{"slope0", p.slope0},
           {"terminal", p.terminal},
           {"nonnegative", p.nonnegative()},
           {"validated", p.validated},
           {"lemma", to_json(rep)},
           {"interpolation",
            {{"min_slack_w", detail::finite_or_null(interp.min_slack_w)},
             {"min_slack_w_bar", detail::finite_or_null(interp.min_slack_w_bar)},
             {"pass", interp.pass()}}},
           {"rows", rows.str()}});
    }
    return r;
  };
  const auto run = detail::run_ensemble(dir, cfg, cfg.n_samples, task);

  std::ostringstream slack, summary;
  slack << "task,path," << lemma_csv_header() << '\n';
  summary << "task,seed,path,slope0,terminal,nonnegative,validated,viol_a,viol_b,"
             "viol_c_lo,viol_c_hi,viol_c_lo_offset,min_slack_a,min_slack_b,"
             "min_slack_c_lo,min_slack_c_hi,interp_pass\n";
  std::map<std::string, long> viol{{"a", 0}, {"b", 0}, {"c_lo", 0}, {"c_hi", 0},
                                   {"c_lo_offset", 0}};
  long paths = 0, no_solution = 0, interp_fail = 0, unvalidated = 0;
  auto cell = [](const nlohmann::json &x) {
    return x.is_null() ? std::string() : detail::fmt(x.get<double>());
  };
  for (std::size_t t = 0; t < run.results.size(); ++t) {
    const auto &r = run.results[t];
    no_solution += r["no_solution"].get<bool>() ? 1 : 0;
    for (std::size_t k = 0; k < r["paths"].size(); ++k) {
      const auto &p = r["paths"][k];
      const auto &v = p["lemma"]["violations"];
      const auto &m = p["lemma"]["min_slack"];
      ++paths;
      for (auto &[key, total] : viol)
        total += v[key].get<long>();
      interp_fail += p["interpolation"]["pass"].get<bool>() ? 0 : 1;
      unvalidated += p["validated"].get<bool>() ? 0 : 1;
      slack << p["rows"].get<std::string>();
      summary << t << ',' << r["seed"].get<std::uint64_t>() << ',' << k << ','
              << detail::fmt(p["slope0"]) << ',' << detail::fmt(p["terminal"]) << ','
              << detail::csv_bool(p["nonnegative"]) << ','
              << detail::csv_bool(p["validated"]) << ',' << v["a"].get<long>() << ','
              << v["b"].get<long>() << ',' << v["c_lo"].get<long>() << ','
              << v["c_hi"].get<long>() << ',' << v["c_lo_offset"].get<long>() << ','
              << cell(m["a"]) << ',' << cell(m["b"]) << ',' << cell(m["c_lo"]) << ','
              << cell(m["c_hi"]) << ',' << detail::csv_bool(p["interpolation"]["pass"])
              << '\n';
    }
  }
  detail::write_text(dir / "lemma_slack.csv", slack.str());
  detail::write_text(dir / "lemma_summary.csv", summary.str());
  RunSummary s;
  s.tasks = run.results.size();
  s.resumed = run.resumed;
  s.report = {{"realizations", run.results.size()},
              {"paths", paths},
              {"no_solution", no_solution},
              {"unvalidated_paths", unvalidated},
              {"tolerance", tol},
              {"violations", viol},
              {"interpolation_failures", interp_fail},
              {"pass_a", viol["a"] == 0},
              {"pass_b", viol["b"] == 0},
              {"pass_c", viol["c_lo"] == 0 && viol["c_hi"] == 0},
              {"pass_interpolation", interp_fail == 0}};
  detail::write_json(dir / "lemma_report.json", s.report);
  s.files = {"lemma_slack.csv", "lemma_summary.csv", "lemma_report.json"};
  return s;
}

inline RunSummary run_crossing(const ExperimentConfig &cfg,
                               const std::filesystem::path &dir) {
  if (cfg.unit_cutoff)
    throw ConfigError("solver.unit_cutoff", "not supported in crossing mode");
  CrossingParams params{cfg.field, cfg.K, cfg.triangle, cfg.solver};
  const std::uint64_t n = cfg.n_samples;
  auto task = [&](std::size_t t) -> nlohmann::json {
    const std::size_t ni = t / n;
    const std::uint64_t sample = t % n;
    const auto o = crossing_realization(params, cfg.N_list[ni], sample,
                                        rng::split_seed(cfg.seed, t));
    return {{"N", o.N},
            {"sample", o.sample},
            {"seed", o.seed},
            {"paths_found", o.paths_found},
            {"nonnegative_paths", o.nonnegative_paths},
            {"below", o.below},
            {"crossed", o.crossed},
            {"max_center", detail::finite_or_null(o.max_center)}};
  };
  const auto run = detail::run_ensemble(dir, cfg, cfg.N_list.size() * n, task);

  std::ostringstream outcomes;
  outcomes << "N,sample,seed,paths_found,nonnegative_paths,below,crossed,max_center\n";
  std::vector<RealizationOutcome> outs;
  for (const auto &r : run.results) {
    RealizationOutcome o;
    o.N = r["N"];
    o.sample = r["sample"];
    o.seed = r["seed"];
    o.paths_found = r["paths_found"];
    o.nonnegative_paths = r["nonnegative_paths"];
    o.below = r["below"];
    o.crossed = r["crossed"];
    if (!r["max_center"].is_null())
      o.max_center = r["max_center"];
    outs.push_back(o);
    outcomes << o.N << ',' << o.sample << ',' << o.seed << ',' << o.paths_found << ','
             << o.nonnegative_paths << ',' << o.below << ',' << detail::csv_bool(o.crossed)
             << ',' << (std::isfinite(o.max_center) ? detail::fmt(o.max_center) : "")
             << '\n';
  }
  std::vector<CrossingEstimate> est;
  for (std::size_t ni = 0; ni < cfg.N_list.size(); ++ni) {
    std::vector<RealizationOutcome> slice(outs.begin() + static_cast<long>(ni * n),
                                          outs.begin() + static_cast<long>((ni + 1) * n));
    est.push_back(summarize_crossing(cfg.N_list[ni], cfg.field.F, cfg.K, slice));
  }
  const DecayFit fit = fit_crossing(est);

  std::ostringstream table, plot;
  table << crossing_csv_header() << ",vacuous\n";
  plot << "N,ln_p_hat,ln_ci_lo,ln_ci_hi,ln_p_fit,ldp_exponent\n";
  bool monotone = true;
  const double mu = 1.0 / cfg.field.lambda0;
  for (std::size_t k = 0; k < est.size(); ++k) {
    const auto &e = est[k];
    std::ostringstream row;
    write_crossing_row(row, e);
    std::string line = row.str();
    line.pop_back();
    table << line << ',' << e.vacuous << '\n';
    if (k > 0 && e.p_hat > est[k - 1].p_hat)
      monotone = false;
    const double smoothed = (e.k_crossed + 0.5) / (e.n + 1.0);
    const double ldp = cfg.field.F > 0.0
                           ? ldp_prediction(e.N, cfg.field.F, cfg.field.delta, mu,
                                            cfg.rate.C, cfg.rate.eta)
                           : std::numeric_limits<double>::quiet_NaN();
    const double fitted = fit.insufficient ? std::numeric_limits<double>::quiet_NaN()
                                           : fit.intercept + fit.slope * e.N;
    auto cell = [](double x) { return std::isfinite(x) ? detail::fmt(x) : std::string(); };
    plot << e.N << ',' << cell(std::log(smoothed)) << ','
         << cell(e.ci.lo > 0.0 ? std::log(e.ci.lo) : -INFINITY) << ','
         << cell(std::log(e.ci.hi)) << ',' << cell(fitted) << ',' << cell(ldp) << '\n';
  }
  detail::write_text(dir / "crossing.csv", table.str());
  detail::write_text(dir / "crossing_outcomes.csv", outcomes.str());
  detail::write_text(dir / "plot_lnp_vs_N.csv", plot.str());
  const auto pre = force_preconditions(cfg.field.F, cfg.field.delta, cfg.field.epsilon);
  RunSummary s;
  s.tasks = run.results.size();
  s.resumed = run.resumed;
  s.report = {{"fit", to_json(fit)},
              {"p_hat_nonincreasing", monotone},
              {"slope_negative_ci_excludes_zero",
               !fit.insufficient && fit.slope_ci.hi < 0.0},
              {"force_preconditions",
               {{"force_ok", pre.force_ok}, {"epsilon_ok", pre.epsilon_ok}}}};
  detail::write_json(dir / "fit.json", s.report);
  s.files = {"crossing.csv", "crossing_outcomes.csv", "plot_lnp_vs_N.csv", "fit.json"};
  return s;
}

inline RunSummary run_phase_sweep(const ExperimentConfig &cfg,
                                  const std::filesystem::path &dir) {
  const std::uint64_t n = cfg.n_samples;
  const double limit = cfg.K * cfg.N;
  auto task = [&](std::size_t t) -> nlohmann::json {
    const std::size_t fi = t / n;
    const std::uint64_t sample = t % n;
    // Shared seeds across the F grid: the coupling behind monotonicity.
    const std::uint64_t seed = rng::split_seed(cfg.seed, sample);
    const ObstacleGrid grid = detail::make_grid(cfg, seed, cfg.F_grid[fi]);
    const auto res = stationary_limit(grid, Problem::auxiliary, detail::zero_data(cfg),
                                      cfg.pde.time_step(),
                                      detail::stationary_options(cfg, limit));
    return {{"F", cfg.F_grid[fi]},
            {"sample", sample},
            {"seed", seed},
            {"status", detail::status_name(res.status)},
            {"pinned", res.stationary()},
            {"t", res.t},
            {"max", res.u.max()},
            {"rate", res.rate}};
  };
  const auto run = detail::run_ensemble(dir, cfg, cfg.F_grid.size() * n, task);

  std::ostringstream outcomes, table;
  outcomes << "F,N,sample,seed,status,pinned,t,max,rate\n";
  table << "F,N,n,pinned,pinned_fraction,ci_lo,ci_hi\n";
  std::vector<std::vector<bool>> pinned(cfg.F_grid.size(), std::vector<bool>(n));
  nlohmann::json fractions = nlohmann::json::array();
  for (std::size_t fi = 0; fi < cfg.F_grid.size(); ++fi) {
    std::uint64_t k = 0;
    for (std::uint64_t s = 0; s < n; ++s) {
      const auto &r = run.results[fi * n + s];
      pinned[fi][s] = r["pinned"].get<bool>();
      k += pinned[fi][s] ? 1 : 0;
      outcomes << detail::fmt(r["F"]) << ',' << cfg.N << ',' << s << ','
               << r["seed"].get<std::uint64_t>() << ',' << r["status"].get<std::string>()
               << ',' << detail::csv_bool(pinned[fi][s]) << ',' << detail::fmt(r["t"])
               << ',' << detail::fmt(r["max"]) << ',' << detail::fmt(r["rate"]) << '\n';
    }
    const auto ci = wilson_interval(k, n);
    const double frac = static_cast<double>(k) / n;
    table << detail::fmt(cfg.F_grid[fi]) << ',' << cfg.N << ',' << n << ',' << k << ','
          << detail::fmt(frac) << ',' << detail::fmt(ci.lo) << ',' << detail::fmt(ci.hi)
          << '\n';
    fractions.push_back({{"F", cfg.F_grid[fi]}, {"pinned_fraction", frac}});
  }
  // A sample pinned at a larger force but not at a smaller one.
  long violations = 0;
  for (std::size_t fi = 1; fi < cfg.F_grid.size(); ++fi)
    for (std::uint64_t s = 0; s < n; ++s)
      if (pinned[fi][s] && !pinned[fi - 1][s])
        ++violations;
  detail::write_text(dir / "phase_sweep.csv", table.str());
  detail::write_text(dir / "phase_outcomes.csv", outcomes.str());
  RunSummary s;
  s.tasks = run.results.size();
  s.resumed = run.resumed;
  s.report = {{"N", cfg.N},
              {"height_limit", limit},
              {"fractions", fractions},
              {"monotonicity_violations", violations}};
  detail::write_json(dir / "phase_report.json", s.report);
  s.files = {"phase_sweep.csv", "phase_outcomes.csv", "phase_report.json"};
  return s;
}

/// Runs one configured experiment and writes manifest.json last.
inline RunSummary run(const ExperimentConfig &cfg) {
  if (cfg.mode == Mode::report)
    throw ConfigError("mode", "report reads an existing output directory");
  const std::filesystem::path dir(cfg.output);
  std::filesystem::create_directories(dir);
  const auto started = std::chrono::steady_clock::now();
  const std::string stamp = detail::utc_timestamp();
  RunSummary s;
  switch (cfg.mode) {
  case Mode::evolve: s = run_evolve(cfg, dir); break;
  case Mode::stationary: s = run_stationary(cfg, dir); break;
  case Mode::lemmas: s = run_lemmas(cfg, dir); break;
  case Mode::crossing: s = run_crossing(cfg, dir); break;
  case Mode::phase_sweep: s = run_phase_sweep(cfg, dir); break;
  case Mode::report: break;
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  detail::write_json(dir / "manifest.json",
                     {{"software", "romlab"},
                      {"version", version},
                      {"mode", mode_name(cfg.mode)},
                      {"config", to_json(cfg)},
                      {"started_utc", stamp},
                      {"wall_time_s", wall},
                      {"workers", cfg.worker_count()},
                      {"tasks", s.tasks},
                      {"resumed_tasks", s.resumed},
                      {"files", s.files},
                      {"report", s.report}});
  return s;
}

/// Summary of a finished output directory.
inline nlohmann::json read_report(const std::filesystem::path &dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in)
    throw ConfigError("out", "no manifest.json in '" + dir.string() + "'");
  nlohmann::json m = nlohmann::json::parse(in, nullptr, false);
  if (m.is_discarded())
    throw Error("corrupt manifest " + path.string());
  return {{"mode", m["mode"]},
          {"version", m["version"]},
          {"started_utc", m["started_utc"]},
          {"wall_time_s", m["wall_time_s"]},
          {"tasks", m["tasks"]},
          {"files", m["files"]},
          {"report", m["report"]}};
}

} // namespace romlab
