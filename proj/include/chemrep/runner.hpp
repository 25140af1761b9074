#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "chemrep/diagnostics.hpp"
#include "chemrep/mesh.hpp"
#include "chemrep/presets.hpp"
#include "chemrep/schemes.hpp"

namespace chemrep {

/// Invalid configuration text or values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  Scheme scheme = Scheme::UVEPS;
  double p = 1.5;
  double eps = 1e-3;
  double dt = 1e-4;
  int steps = 500;
  int nx = 20;
  int ny = 20;
  double lx = 2.0;
  double ly = 2.0;
  std::string ic = "gauss";
  double picard_tol = 1e-3;
  int picard_max = 200;
  double linear_tol = 1e-12;
  int output_every = 1;
  std::string out_dir = "run";
  bool track_re = true;
  int anderson_depth = 5;
  NonlinearMethod method = NonlinearMethod::picard;
  bool newton_fallback = true;
  int snapshot_every = 0;  // VTK field files every n steps; 0 writes none

  SchemeConfig scheme_config() const {
    SchemeConfig c;
    c.scheme = scheme;
    c.p = p;
    c.eps = eps;
    c.dt = dt;
    c.picard_tol = picard_tol;
    c.picard_max = picard_max;
    c.linear_tol = linear_tol;
    c.anderson_depth = anderson_depth;
    c.method = method;
    c.newton_fallback = newton_fallback;
    return c;
  }

  void validate() const {
    try {
      scheme_config().validate();
      parse_preset(ic);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (nx < 1 || ny < 1) throw ConfigError("nx and ny must be >= 1");
    if (!(lx > 0.0) || !(ly > 0.0) || !std::isfinite(lx) || !std::isfinite(ly))
      throw ConfigError("lx and ly must be > 0");
    if (output_every < 1) throw ConfigError("output_every must be >= 1");
    if (snapshot_every < 0) throw ConfigError("snapshot_every must be >= 0");
    if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  }
};

namespace config_detail {

inline std::string trim(std::string s) {
  auto space = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), space));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), space).base(), s.end());
  return s;
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": '" + v + "' is not a number");
  return x;
}

inline int to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long x = 0;
  try {
    x = std::stol(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || x < INT32_MIN || x > INT32_MAX)
    throw ConfigError(key + ": '" + v + "' is not an integer");
  return static_cast<int>(x);
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

inline std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace config_detail

/// Keys in echo order.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "scheme",     "p",          "eps",          "dt",        "steps",          "nx",
      "ny",         "lx",         "ly",           "ic",        "picard_tol",     "picard_max",
      "linear_tol", "output_every", "out_dir",    "track_re",  "anderson_depth", "method",
      "newton_fallback", "snapshot_every"};
  return keys;
}

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  using namespace config_detail;
  try {
    if (key == "scheme") c.scheme = parse_scheme(value);
    else if (key == "p") c.p = to_double(key, value);
    else if (key == "eps") c.eps = to_double(key, value);
    else if (key == "dt") c.dt = to_double(key, value);
    else if (key == "steps") c.steps = to_int(key, value);
    else if (key == "nx") c.nx = to_int(key, value);
    else if (key == "ny") c.ny = to_int(key, value);
    else if (key == "lx") c.lx = to_double(key, value);
    else if (key == "ly") c.ly = to_double(key, value);
    else if (key == "ic") c.ic = value;
    else if (key == "picard_tol") c.picard_tol = to_double(key, value);
    else if (key == "picard_max") c.picard_max = to_int(key, value);
    else if (key == "linear_tol") c.linear_tol = to_double(key, value);
    else if (key == "output_every") c.output_every = to_int(key, value);
    else if (key == "out_dir") c.out_dir = value;
    else if (key == "track_re") c.track_re = to_bool(key, value);
    else if (key == "anderson_depth") c.anderson_depth = to_int(key, value);
    else if (key == "method") c.method = parse_method(value);
    else if (key == "newton_fallback") c.newton_fallback = to_bool(key, value);
    else if (key == "snapshot_every") c.snapshot_every = to_int(key, value);
    else throw ConfigError("unknown key '" + key + "'");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

inline std::string get_config_value(const RunConfig& c, const std::string& key) {
  using config_detail::num;
  if (key == "scheme") return std::string(to_string(c.scheme));
  if (key == "p") return num(c.p);
  if (key == "eps") return num(c.eps);
  if (key == "dt") return num(c.dt);
  if (key == "steps") return std::to_string(c.steps);
  if (key == "nx") return std::to_string(c.nx);
  if (key == "ny") return std::to_string(c.ny);
  if (key == "lx") return num(c.lx);
  if (key == "ly") return num(c.ly);
  if (key == "ic") return c.ic;
  if (key == "picard_tol") return num(c.picard_tol);
  if (key == "picard_max") return std::to_string(c.picard_max);
  if (key == "linear_tol") return num(c.linear_tol);
  if (key == "output_every") return std::to_string(c.output_every);
  if (key == "out_dir") return c.out_dir;
  if (key == "track_re") return c.track_re ? "true" : "false";
  if (key == "anderson_depth") return std::to_string(c.anderson_depth);
  if (key == "method") return std::string(to_string(c.method));
  if (key == "newton_fallback") return c.newton_fallback ? "true" : "false";
  if (key == "snapshot_every") return std::to_string(c.snapshot_every);
  throw ConfigError("unknown key '" + key + "'");
}

/// Parses `key = value` lines; `#` starts a comment.  Repeated keys are an error.
inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const auto key = config_detail::trim(line.substr(0, eq));
    const auto value = config_detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, value).second)
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return out;
}

inline void apply_config(RunConfig& c, const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) set_config_value(c, k, v);
}

inline RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  RunConfig c;
  apply_config(c, parse_config_text(ss.str()));
  return c;
}

/// Every key with its resolved value; parsing this text reproduces `c` exactly.
inline std::string echo_config(const RunConfig& c) {
  std::string s = "# resolved configuration\n";
  for (const auto& k : config_keys()) s += k + " = " + get_config_value(c, k) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Field output

/// Legacy ASCII VTK unstructured grid: triangles (cell type 5), POINT_DATA
/// scalars u and v and vectors sigma.
inline void write_vtk(std::ostream& os, const StructuredTriMesh& mesh, std::span<const double> u,
                      std::span<const double> v, std::span<const double> sigma,
                      const std::string& title = "chemrep fields") {
  const std::size_t n = mesh.num_nodes(), m = mesh.num_elements();
  if (u.size() != n || v.size() != n || sigma.size() != 2 * n)
    throw std::invalid_argument("write_vtk: field sizes do not match the mesh");
  auto num = [](double x) { return config_detail::num(x); };
  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << n << " double\n";
  for (const auto& x : mesh.nodes()) os << num(x[0]) << ' ' << num(x[1]) << " 0\n";
  os << "CELLS " << m << ' ' << 4 * m << '\n';
  for (const auto& e : mesh.elements()) os << "3 " << e[0] << ' ' << e[1] << ' ' << e[2] << '\n';
  os << "CELL_TYPES " << m << '\n';
  for (std::size_t e = 0; e < m; ++e) os << "5\n";
  os << "POINT_DATA " << n << '\n';
  auto scalars = [&](const char* name, std::span<const double> f) {
    os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (double x : f) os << num(x) << '\n';
  };
  scalars("u", u);
  scalars("v", v);
  os << "VECTORS sigma double\n";
  for (std::size_t i = 0; i < n; ++i) os << num(sigma[i]) << ' ' << num(sigma[n + i]) << " 0\n";
}

/// sigma for output: the state's own for the sigma schemes, otherwise the L^2
/// projection of grad v.
inline std::vector<double> output_sigma(const SchemeSolver& solver, const SchemeState& s) {
  if (uses_sigma(solver.config().scheme)) return s.sigma.data();
  return project_Qh_vec(solver.mesh(), grad_p1(solver.mesh(), s.v.data()), false,
                        solver.linear_config())
      .data();
}

inline void dump_field(const SchemeSolver& solver, const SchemeState& s,
                       const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  const auto sigma = output_sigma(solver, s);
  write_vtk(f, solver.mesh(), s.u.data(), s.v.data(), sigma,
            "chemrep " + std::string(to_string(solver.config().scheme)) + " step " +
                std::to_string(s.step));
}

// ---------------------------------------------------------------------------
// Runs

inline constexpr const char* kSeriesHeader =
    "step,t,mass,energy_modified,energy_exact,residual_RE,min_u,min_v,picard_iters,solver_iters";

inline std::string series_row(const RunRecord& r) {
  using config_detail::num;
  return std::to_string(r.step) + ',' + num(r.time) + ',' + num(r.mass) + ',' +
         num(r.energy_modified) + ',' + num(r.energy_exact) + ',' +
         (r.residual_RE ? num(*r.residual_RE) : std::string()) + ',' + num(r.min_u) + ',' +
         num(r.min_v) + ',' + std::to_string(r.picard_iters) + ',' + std::to_string(r.solver_iters);
}

inline bool record_finite(const RunRecord& r) {
  for (double x : {r.time, r.mass, r.energy_modified, r.energy_exact, r.min_u, r.min_v})
    if (!std::isfinite(x)) return false;
  return !r.residual_RE || std::isfinite(*r.residual_RE);
}

enum class RunStatus { ok, nonconvergence, non_finite };

inline std::string_view to_string(RunStatus s) noexcept {
  switch (s) {
    case RunStatus::ok: return "ok";
    case RunStatus::nonconvergence: return "nonconvergence";
    case RunStatus::non_finite: return "non_finite";
  }
  return "?";
}

struct RunOutcome {
  RunStatus status = RunStatus::ok;
  long steps_completed = 0;
  std::string message;
};

/// Executes one run into `cfg.out_dir`: config.echo, series.csv and optional
/// VTK snapshots.  Failures after the directory exists are reported in the
/// outcome with the last completed step already written.
inline RunOutcome run_simulation(const RunConfig& cfg) {
  cfg.validate();
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream echo(dir / "config.echo");
    echo << echo_config(cfg);
  }
  const StructuredTriMesh mesh(cfg.nx, cfg.ny, cfg.lx, cfg.ly);
  const SchemeSolver solver(mesh, cfg.scheme_config());
  SchemeState state = solver.init_state(parse_preset(cfg.ic));

  std::ofstream csv(dir / "series.csv");
  csv << kSeriesHeader << '\n';
  RunOutcome out;
  auto emit = [&](const RunRecord& rec) {
    csv << series_row(rec) << '\n';
    csv.flush();
  };
  auto snapshot = [&](const SchemeState& s) {
    if (cfg.snapshot_every > 0 && s.step % cfg.snapshot_every == 0) {
      char name[40];
      std::snprintf(name, sizeof name, "fields_%06ld.vtk", s.step);
      dump_field(solver, s, dir / name);
    }
  };

  const RunRecord first = make_record(solver, state, nullptr, nullptr);
  if (!record_finite(first)) return {RunStatus::non_finite, 0, "non-finite initial diagnostics"};
  emit(first);
  snapshot(state);
  for (int n = 0; n < cfg.steps; ++n) {
    std::pair<SchemeState, PicardReport> next;
    try {
      next = solver.step(state);
    } catch (const PicardError& e) {
      out.status = RunStatus::nonconvergence;
      out.message = e.what();
      return out;
    } catch (const SolverError& e) {
      out.status = RunStatus::nonconvergence;
      out.message = e.what();
      return out;
    }
    RunRecord rec = make_record(solver, next.first, &state, &next.second);
    if (!cfg.track_re) rec.residual_RE.reset();
    const auto& s = next.first;
    const bool finite = record_finite(rec) &&
                        std::all_of(s.u.data().begin(), s.u.data().end(), [](double x) { return std::isfinite(x); }) &&
                        std::all_of(s.v.data().begin(), s.v.data().end(), [](double x) { return std::isfinite(x); });
    if (!finite) {
      out.status = RunStatus::non_finite;
      out.message = "non-finite values at step " + std::to_string(s.step) + " (mass " +
                    config_detail::num(rec.mass) + ", min_u " + config_detail::num(rec.min_u) +
                    ", energy " + config_detail::num(rec.energy_exact) + ")";
      return out;
    }
    state = std::move(next.first);
    out.steps_completed = state.step;
    if (state.step % cfg.output_every == 0) emit(rec);
    snapshot(state);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepAxes {
  std::vector<Scheme> schemes;
  std::vector<double> ps;
  std::vector<double> epss;
};

struct SweepEntry {
  std::size_t index = 0;
  RunConfig config;
  RunOutcome outcome;
};

inline constexpr const char* kManifestHeader = "index,scheme,p,eps,dir,status,steps_completed,message";

/// Cartesian product of the axes over `base`; an empty axis keeps the base value.
inline std::vector<RunConfig> sweep_configs(const RunConfig& base, const SweepAxes& axes) {
  const auto schemes = axes.schemes.empty() ? std::vector<Scheme>{base.scheme} : axes.schemes;
  const auto ps = axes.ps.empty() ? std::vector<double>{base.p} : axes.ps;
  const auto es = axes.epss.empty() ? std::vector<double>{base.eps} : axes.epss;
  std::vector<RunConfig> out;
  for (Scheme s : schemes)
    for (double p : ps)
      for (double e : es) {
        RunConfig c = base;
        c.scheme = s;
        c.p = p;
        c.eps = e;
        char name[32];
        std::snprintf(name, sizeof name, "run_%03zu", out.size());
        c.out_dir = (std::filesystem::path(base.out_dir) / name).string();
        out.push_back(std::move(c));
      }
  return out;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c == '\n' ? ' ' : c);
  return q + "\"";
}

/// Runs every combination on up to `threads` workers and writes manifest.csv
/// under base.out_dir.  A failing run is recorded and the others continue.
inline std::vector<SweepEntry> run_sweep(const RunConfig& base, const SweepAxes& axes,
                                         unsigned threads = 0) {
  const auto configs = sweep_configs(base, axes);
  for (const auto& c : configs) c.validate();
  std::filesystem::create_directories(base.out_dir);
  std::vector<SweepEntry> entries(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < configs.size();) {
      entries[i].index = i;
      entries[i].config = configs[i];
      try {
        entries[i].outcome = run_simulation(configs[i]);
      } catch (const std::exception& e) {
        entries[i].outcome = {RunStatus::nonconvergence, 0, e.what()};
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, configs.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::ofstream manifest(std::filesystem::path(base.out_dir) / "manifest.csv");
  manifest << kManifestHeader << '\n';
  for (const auto& e : entries) {
    manifest << e.index << ',' << to_string(e.config.scheme) << ',' << config_detail::num(e.config.p)
             << ',' << config_detail::num(e.config.eps) << ','
             << csv_quote(std::filesystem::path(e.config.out_dir).filename().string()) << ','
             << to_string(e.outcome.status) << ',' << e.outcome.steps_completed << ','
             << csv_quote(e.outcome.message) << '\n';
  }
  return entries;
}

}  // namespace chemrep
