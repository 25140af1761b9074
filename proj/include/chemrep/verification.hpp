#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <future>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "chemrep/diagnostics.hpp"
#include "chemrep/lambda_ops.hpp"
#include "chemrep/presets.hpp"
#include "chemrep/regularization.hpp"
#include "chemrep/schemes.hpp"
#include "chemrep/testing/dense_oracle.hpp"

namespace chemrep::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

enum class Level { fast, full };

inline std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

/// Runs `fn` and fills in the wall time.
template <class Fn>
CheckResult timed(const std::string& name, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = fn();
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.name = name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Evaluates f on every item concurrently, preserving order.
template <class T, class Fn>
auto parallel_map(const std::vector<T>& items, Fn fn) {
  using R = decltype(fn(items.front()));
  std::vector<std::future<R>> futures;
  futures.reserve(items.size());
  for (const auto& item : items)
    futures.push_back(std::async(std::launch::async, [&fn, &item] { return fn(item); }));
  std::vector<R> out;
  out.reserve(items.size());
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

// ---------------------------------------------------------------------------
// Random nodal data

/// Nodal values spread over all three branches of F_eps, negatives included.
inline std::vector<double> sample_field(std::mt19937_64& rng, std::size_t n, double eps) {
  std::uniform_int_distribution<int> pick(0, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> u(n);
  for (double& x : u) {
    switch (pick(rng)) {
      case 0: x = eps * (4.0 * unit(rng) - 2.0); break;
      case 1: x = std::exp(std::log(eps) * (1.0 - 2.0 * unit(rng))); break;
      case 2: x = (0.5 + 2.5 * unit(rng)) / eps; break;
      default: x = 0.5 + 1.5 * unit(rng); break;
    }
  }
  return u;
}

inline const std::vector<std::pair<double, double>>& lambda_parameter_grid() {
  static const std::vector<std::pair<double, double>> grid = [] {
    std::vector<std::pair<double, double>> g;
    for (double p : {1.1, 1.5, 1.9})
      for (double eps : {1e-1, 1e-3, 1e-5}) g.emplace_back(p, eps);
    return g;
  }();
  return grid;
}

inline double rel_gap(const Vec2& a, const Vec2& b) {
  const double scale = std::max(std::hypot(a[0], a[1]), std::hypot(b[0], b[1]));
  const double d = std::hypot(a[0] - b[0], a[1] - b[1]);
  return scale > 0.0 ? d / scale : d;
}

// ---------------------------------------------------------------------------
// Lambda operators

struct IdentityStats {
  double max_rel_chain = 0.0;       // Lambda^1 grad Pi F' = grad u
  double max_rel_production = 0.0;  // Lambda^2 grad Pi F' = (p-1) grad Pi F
  long elements = 0;
};

/// Elementwise residuals of the two discrete chain rules over random fields.
inline IdentityStats identity_residuals(const StructuredTriMesh& mesh, double p, double eps,
                                        int samples, std::uint64_t seed,
                                        const LambdaBuilder& l1 = &lambda1,
                                        const LambdaBuilder& l2 = &lambda2) {
  const RegularizedPotential pot(p, eps);
  std::mt19937_64 rng(seed);
  IdentityStats st;
  for (int s = 0; s < samples; ++s) {
    const auto u = sample_field(rng, mesh.num_nodes(), eps);
    const auto gfp = grad_p1(mesh, compose(u, [&](double x) { return pot.f_prime(x); }));
    const auto gf = grad_p1(mesh, compose(u, [&](double x) { return pot.f_value(x); }));
    const auto gu = grad_p1(mesh, u);
    const auto lam1 = l1(pot, mesh, u);
    const auto lam2 = l2(pot, mesh, u);
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
      st.max_rel_chain = std::max(st.max_rel_chain, rel_gap(lam1[e].apply(gfp[e]), gu[e]));
      const Vec2 rhs{(p - 1.0) * gf[e][0], (p - 1.0) * gf[e][1]};
      st.max_rel_production = std::max(st.max_rel_production, rel_gap(lam2[e].apply(gfp[e]), rhs));
    }
    st.elements += static_cast<long>(mesh.num_elements());
  }
  return st;
}

/// Criterion 1.
inline CheckResult check_element_identities(int nx, int samples,
                                            const LambdaBuilder& l1 = &lambda1,
                                            const LambdaBuilder& l2 = &lambda2) {
  const StructuredTriMesh mesh(nx, nx, 2.0, 2.0);
  const auto& grid = lambda_parameter_grid();
  std::vector<std::size_t> idx(grid.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto stats = parallel_map(idx, [&](std::size_t i) {
    return identity_residuals(mesh, grid[i].first, grid[i].second, samples, 1000 + i, l1, l2);
  });
  IdentityStats worst;
  for (const auto& s : stats) {
    worst.max_rel_chain = std::max(worst.max_rel_chain, s.max_rel_chain);
    worst.max_rel_production = std::max(worst.max_rel_production, s.max_rel_production);
    worst.elements += s.elements;
  }
  CheckResult r;
  r.passed = worst.max_rel_chain <= 1e-12 && worst.max_rel_production <= 1e-12;
  r.detail = "max relative residual " + fmt("%.2e", worst.max_rel_chain) + " (Lambda1), " +
             fmt("%.2e", worst.max_rel_production) + " (Lambda2) over " +
             std::to_string(worst.elements) + " element evaluations";
  return r;
}

/// Condition number of the difference quotient (ul - u0) / (F'(ul) - F'(u0)):
/// its relative rounding error is a few ulps times this.  It is large only for
/// close values in an affine branch, where the exact quotient sits on the
/// spectral bound.
inline double quotient_condition(const RegularizedPotential& pot, double u0, double ul) {
  if (!values_differ(u0, ul)) return 1.0;
  const double a = pot.f_prime(u0), b = pot.f_prime(ul);
  return (std::abs(a) + std::abs(b)) / std::abs(b - a) + (std::abs(u0) + std::abs(ul)) / std::abs(ul - u0);
}

struct BoundStats {
  long spectral_violations = 0;
  long lipschitz_violations = 0;
  double worst_lipschitz_ratio = 0.0;  // ||dLambda2|| / bound
  long elements = 0;
};

/// Eigenvalues of Lambda^1 in [eps^(2-p), eps^(p-2)] and the Lipschitz bound
/// on Lambda^2.  Pairs are either independent or small perturbations.
inline BoundStats bound_checks(const StructuredTriMesh& mesh, double p, double eps, int samples,
                               std::uint64_t seed) {
  const RegularizedPotential pot(p, eps);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double lo = std::pow(eps, 2.0 - p), hi = std::pow(eps, p - 2.0);
  const double e2 = std::pow(eps, 2.0 * (p - 2.0));
  const double lip = 3.0 * e2 * std::max(1.0, (p - 1.0) * e2);
  constexpr double round = 1e-12;  // relative slack for floating-point rounding
  BoundStats st;
  for (int s = 0; s < samples; ++s) {
    const auto u1 = sample_field(rng, mesh.num_nodes(), eps);
    std::vector<double> u2;
    if (s % 2 == 0) {
      u2 = sample_field(rng, mesh.num_nodes(), eps);
    } else {
      u2 = u1;
      for (double& x : u2) {
        const double mag = std::max(1.0, std::abs(x)) * std::pow(10.0, -6.0 * unit(rng));
        x += unit(rng) < 0.5 ? -mag : mag;
      }
    }
    const auto a1 = lambda1(pot, mesh, u1);
    const auto b1 = lambda2(pot, mesh, u1);
    const auto b2 = lambda2(pot, mesh, u2);
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
      const auto ev = a1[e].eigenvalues();
      const auto& el = mesh.element(e);
      const double slack = round + 4.0 * std::numeric_limits<double>::epsilon() *
                                       std::max(quotient_condition(pot, u1[el[0]], u1[el[1]]),
                                                quotient_condition(pot, u1[el[0]], u1[el[2]]));
      if (ev[0] < lo * (1.0 - slack) || ev[1] > hi * (1.0 + slack)) ++st.spectral_violations;
      const double d0 = std::abs(u1[el[0]] - u2[el[0]]);
      const double dl = std::max(std::abs(u1[el[1]] - u2[el[1]]), std::abs(u1[el[2]] - u2[el[2]]));
      const double bound = lip * (dl + d0);
      const double diff = (b1[e] - b2[e]).spectral_norm();
      if (bound > 0.0) st.worst_lipschitz_ratio = std::max(st.worst_lipschitz_ratio, diff / bound);
      if (diff > bound * (1.0 + round)) ++st.lipschitz_violations;
    }
    st.elements += static_cast<long>(mesh.num_elements());
  }
  return st;
}

/// Criterion 2.
inline CheckResult check_lambda_bounds(int nx, int samples) {
  const StructuredTriMesh mesh(nx, nx, 2.0, 2.0);
  const auto& grid = lambda_parameter_grid();
  std::vector<std::size_t> idx(grid.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto stats = parallel_map(idx, [&](std::size_t i) {
    return bound_checks(mesh, grid[i].first, grid[i].second, samples, 2000 + i);
  });
  BoundStats total;
  for (const auto& s : stats) {
    total.spectral_violations += s.spectral_violations;
    total.lipschitz_violations += s.lipschitz_violations;
    total.worst_lipschitz_ratio = std::max(total.worst_lipschitz_ratio, s.worst_lipschitz_ratio);
    total.elements += s.elements;
  }
  CheckResult r;
  r.passed = total.spectral_violations == 0 && total.lipschitz_violations == 0;
  r.detail = std::to_string(total.spectral_violations) + " spectral and " +
             std::to_string(total.lipschitz_violations) + " Lipschitz violations over " +
             std::to_string(total.elements) + " elements (largest ratio to bound " +
             fmt("%.2e", total.worst_lipschitz_ratio) + ")";
  return r;
}

// ---------------------------------------------------------------------------
// Regularized potential

/// F' and F on a grid, obtained by integrating f_second outward from s = 1
/// with F'(1) = 1/(p-1) and the stated F(1).  Grid nodes include both
/// breakpoints; spacing is geometric on [eps, 1/eps].  Per cell,
///   F'(b) = F'(a) + int_a^b F'',  F(b) = F(a) + (b-a) F'(a) + int_a^b (b-t) F''(t) dt,
/// each integral by Simpson's rule.  The scales accumulate |anchor| plus the
/// integral of the absolute integrand along the path.  Values more than four
/// decades below their scale carry cancellation error from the anchor and are
/// compared against 1e-4 times the scale instead.
struct IntegratedPotential {
  std::vector<double> s, first, value;
  std::vector<double> first_scale, value_scale;
};

inline IntegratedPotential integrate_potential(const RegularizedPotential& pot, double lo,
                                               double hi, int per_decade) {
  const double p = pot.p(), eps = pot.eps();
  auto geometric = [&](double from, double to) {
    const int n = std::max(1, static_cast<int>(std::ceil(std::abs(std::log10(to / from)) * per_decade)));
    std::vector<double> pts(n + 1);
    for (int i = 0; i <= n; ++i) pts[i] = from * std::pow(to / from, double(i) / n);
    pts.back() = to;
    return pts;
  };
  auto uniform = [](double from, double to, int n) {
    std::vector<double> pts(n + 1);
    for (int i = 0; i <= n; ++i) pts[i] = from + (to - from) * double(i) / n;
    pts.back() = to;
    return pts;
  };
  // outward legs from the anchor
  std::vector<double> up = geometric(1.0, 1.0 / eps);
  const auto tail = uniform(1.0 / eps, hi, 1000);
  up.insert(up.end(), tail.begin() + 1, tail.end());
  std::vector<double> down = geometric(1.0, eps);
  const auto low = uniform(eps, lo, 1000);
  down.insert(down.end(), low.begin() + 1, low.end());

  const double f1 = 1.0 / (p * (p - 1.0)) +
                    (p * p * p - 4.0 * p * p + 3.0 * p + 2.0) / (2.0 * p * (p - 1.0) * (p - 1.0)) *
                        std::pow(eps, p);
  auto sweep = [&](const std::vector<double>& pts) {
    IntegratedPotential leg;
    leg.s = pts;
    const std::size_t n = pts.size();
    leg.first.assign(n, 1.0 / (p - 1.0));
    leg.value.assign(n, f1);
    leg.first_scale.assign(n, std::abs(leg.first[0]));
    leg.value_scale.assign(n, std::abs(f1));
    for (std::size_t i = 1; i < n; ++i) {
      const double a = pts[i - 1], b = pts[i], m = 0.5 * (a + b), h = b - a;
      const double ga = pot.f_second(a), gm = pot.f_second(m), gb = pot.f_second(b);
      const double dfp = h / 6.0 * (ga + 4.0 * gm + gb);
      const double df = h * leg.first[i - 1] + h / 6.0 * (h * ga + 4.0 * (b - m) * gm);
      leg.first[i] = leg.first[i - 1] + dfp;
      leg.value[i] = leg.value[i - 1] + df;
      leg.first_scale[i] = leg.first_scale[i - 1] + std::abs(dfp);
      leg.value_scale[i] = leg.value_scale[i - 1] + std::abs(df);
    }
    return leg;
  };
  const auto lower = sweep(down), upper = sweep(up);
  IntegratedPotential out;
  auto append = [&out](const IntegratedPotential& leg, std::size_t i) {
    out.s.push_back(leg.s[i]);
    out.first.push_back(leg.first[i]);
    out.value.push_back(leg.value[i]);
    out.first_scale.push_back(leg.first_scale[i]);
    out.value_scale.push_back(leg.value_scale[i]);
  };
  for (std::size_t i = lower.s.size(); i-- > 1;) append(lower, i);
  for (std::size_t i = 0; i < upper.s.size(); ++i) append(upper, i);
  return out;
}

inline double rel_diff(double a, double b, double floor = 0.0) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return scale > 0.0 ? std::abs(a - b) / scale : 0.0;
}

struct PotentialStats {
  double max_jump = 0.0;        // breakpoint mismatch of F, F', F''
  long lemma_violations = 0;    // lower bounds on F
  long remark_violations = 0;   // |s|^p <= K1 F + K2
  double max_identity = 0.0;    // a_eps F'' vs (p-1) F'
  double max_oracle = 0.0;      // library vs integrated F', F
  long oracle_points = 0;
};

/// Property suite of F_eps for one (p, eps).  `grid_points` s-values are split
/// evenly between s <= eps and s > eps.
inline PotentialStats potential_properties(double p, double eps, int grid_points,
                                           int per_decade) {
  const RegularizedPotential pot(p, eps);
  PotentialStats st;
  auto jump = [&](Branch a, Branch b, double s) {
    const auto x = pot.branch_values(a, s), y = pot.branch_values(b, s);
    st.max_jump = std::max({st.max_jump, rel_diff(x.value, y.value), rel_diff(x.first, y.first),
                            rel_diff(x.second, y.second)});
  };
  jump(Branch::low, Branch::middle, eps);
  jump(Branch::middle, Branch::high, 1.0 / eps);

  const int half = grid_points / 2;
  const double c = 1.0 / (p * (p - 1.0));
  const double k1 = 4.0 * p * (p - 1.0), k2 = 1.0;
  constexpr double round = 1e-13;
  for (int i = 0; i < grid_points; ++i) {
    double s;
    if (i < half) {
      s = -10.0 + (eps + 10.0) * double(i) / (half - 1);  // [-10, eps]
      if (pot.f_value(s) < 0.25 * std::pow(eps, p - 2.0) * s * s * (1.0 - round)) ++st.lemma_violations;
    } else {
      const double t = double(i - half + 1) / (grid_points - half);  // (0, 1]
      s = eps * std::pow(1e3 / (eps * eps), t);                      // (eps, 1e3/eps]
      if (pot.f_value(s) < c * std::pow(s, p) * (1.0 - round)) ++st.lemma_violations;
    }
    if (std::pow(std::abs(s), p) > k1 * pot.f_value(s) + k2) ++st.remark_violations;
    st.max_identity = std::max(st.max_identity,
                               rel_diff(pot.a_eps(s) * pot.f_second(s), (p - 1.0) * pot.f_prime(s)));
  }

  const auto table = integrate_potential(pot, -2.0, 2.0 / eps, per_decade);
  for (std::size_t i = 0; i < table.s.size(); ++i) {
    const double s = table.s[i];
    st.max_oracle = std::max({st.max_oracle, rel_diff(pot.f_prime(s), table.first[i], 1e-4 * table.first_scale[i]),
                              rel_diff(pot.f_value(s), table.value[i], 1e-4 * table.value_scale[i])});
  }
  st.oracle_points = static_cast<long>(table.s.size());
  return st;
}

/// Criterion 3.
inline CheckResult check_potential_suite(int grid_points, int per_decade) {
  std::vector<std::pair<double, double>> grid;
  for (double p : {1.1, 1.4, 1.5, 1.9})
    for (double eps : {1e-1, 1e-3, 1e-5}) grid.emplace_back(p, eps);
  const auto stats = parallel_map(grid, [&](const std::pair<double, double>& pe) {
    return potential_properties(pe.first, pe.second, grid_points, per_decade);
  });
  PotentialStats w;
  for (const auto& s : stats) {
    w.max_jump = std::max(w.max_jump, s.max_jump);
    w.lemma_violations += s.lemma_violations;
    w.remark_violations += s.remark_violations;
    w.max_identity = std::max(w.max_identity, s.max_identity);
    w.max_oracle = std::max(w.max_oracle, s.max_oracle);
    w.oracle_points += s.oracle_points;
  }
  CheckResult r;
  r.passed = w.max_jump <= 1e-12 && w.lemma_violations == 0 && w.max_oracle <= 1e-7;
  r.detail = "breakpoint jump " + fmt("%.2e", w.max_jump) + ", " +
             std::to_string(w.lemma_violations) + " lower-bound violations, oracle gap " +
             fmt("%.2e", w.max_oracle) + " over " + std::to_string(w.oracle_points) +
             " points, " + std::to_string(w.remark_violations) +
             " |s|^p bound violations, a_eps identity " + fmt("%.2e", w.max_identity);
  return r;
}

// ---------------------------------------------------------------------------
// Time-stepping runs

struct StepSample {
  long step = 0;
  double mass = 0.0;
  double energy_exact = 0.0;
  double energy_exact_prev = 0.0;
  double residual_re = 0.0;
  double min_u = 0.0;
  double negative_part = 0.0;
  std::optional<EnergyLaw> law;
  bool used_newton = false;
};

struct RunSeries {
  SchemeConfig cfg;
  std::string label;
  double mass0 = 0.0;
  std::vector<StepSample> steps;
  std::optional<std::string> failure;
};

struct RunSpec {
  SchemeConfig cfg;
  std::string preset;
  int nx = 20;
  int steps = 200;
};

inline std::string label_of(const SchemeConfig& cfg) {
  std::string s(to_string(cfg.scheme));
  if (uses_eps(cfg.scheme)) s += "(eps=" + fmt("%.0e", cfg.eps) + ")";
  return s + " p=" + fmt("%g", cfg.p) + " dt=" + fmt("%g", cfg.dt);
}

inline RunSeries run_series(const RunSpec& spec) {
  const StructuredTriMesh mesh(spec.nx, spec.nx, 2.0, 2.0);
  const SchemeSolver solver(mesh, spec.cfg);
  RunSeries out;
  out.cfg = spec.cfg;
  out.label = label_of(spec.cfg);
  const double p = spec.cfg.p;
  auto state = solver.init_state(parse_preset(spec.preset));
  out.mass0 = mass(solver.space(), state.u.data());
  const bool has_law = spec.cfg.scheme != Scheme::UV;
  try {
    for (int n = 0; n < spec.steps; ++n) {
      auto [next, report] = solver.step(state);
      StepSample s;
      s.step = next.step;
      s.mass = mass(solver.space(), next.u.data());
      s.energy_exact_prev = energy_exact(solver.space(), p, state.u.data(), state.v.data());
      s.energy_exact = energy_exact(solver.space(), p, next.u.data(), next.v.data());
      s.residual_re = residual_RE(solver.space(), p, spec.cfg.dt, state.u.data(), state.v.data(),
                                  next.u.data(), next.v.data())
                          .total();
      s.min_u = min_nodal(next.u.data());
      s.negative_part = negative_part_norm(solver.space(), next.u.data());
      if (has_law) s.law = energy_law(solver, state, next);
      s.used_newton = report.used_newton;
      out.steps.push_back(s);
      state = std::move(next);
    }
  } catch (const std::exception& e) {
    out.failure = out.label + ": " + e.what();
  }
  return out;
}

inline std::vector<RunSeries> run_all(const std::vector<RunSpec>& specs) {
  return parallel_map(specs, [](const RunSpec& s) { return run_series(s); });
}

inline SchemeConfig tight_config(Scheme scheme, double p, double eps, double dt) {
  SchemeConfig cfg;
  cfg.scheme = scheme;
  cfg.p = p;
  cfg.eps = eps;
  cfg.dt = dt;
  cfg.picard_tol = 1e-10;
  cfg.linear_tol = 1e-12;
  return cfg;
}

/// Collects run failures; returns false if any.
inline bool all_completed(const std::vector<RunSeries>& runs, std::string& detail) {
  bool ok = true;
  for (const auto& r : runs) {
    if (r.failure) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + *r.failure;
    }
  }
  return ok;
}

/// Criterion 4 on the given runs.
inline CheckResult evaluate_mass(const std::vector<RunSeries>& runs) {
  CheckResult r;
  r.passed = all_completed(runs, r.detail);
  double worst = 0.0;
  for (const auto& run : runs)
    for (const auto& s : run.steps) worst = std::max(worst, std::abs(s.mass - run.mass0) / std::abs(run.mass0));
  if (worst > 1e-10) r.passed = false;
  r.detail = "max |m^n - m0| / m0 = " + fmt("%.2e", worst) + " over " + std::to_string(runs.size()) +
             " runs" + (r.detail.empty() ? "" : "; " + r.detail);
  return r;
}

/// Criterion 5 on the given runs: lhs <= 1e-8 |E^{n-1}| at every step.
inline CheckResult evaluate_energy_laws(const std::vector<RunSeries>& runs) {
  CheckResult r;
  r.passed = all_completed(runs, r.detail);
  double worst = -std::numeric_limits<double>::infinity();
  double worst_identity = 0.0;
  long steps = 0;
  for (const auto& run : runs)
    for (const auto& s : run.steps) {
      if (!s.law) continue;
      const double scale = std::abs(s.law->energy_prev);
      worst = std::max(worst, s.law->lhs / scale);
      worst_identity = std::max(worst_identity, std::abs(s.law->identity) / scale);
      ++steps;
    }
  if (!(worst <= 1e-8)) r.passed = false;
  r.detail = "max lhs / |E^{n-1}| = " + fmt("%.2e", worst) + " over " + std::to_string(steps) +
             " steps (identity residual " + fmt("%.1e", worst_identity) + ")" +
             (r.detail.empty() ? "" : "; " + r.detail);
  return r;
}

inline std::vector<RunSpec> gauss_runs(int nx, int steps, double dt, bool include_uv) {
  std::vector<RunSpec> specs;
  for (Scheme s : {Scheme::UV, Scheme::UVEPS, Scheme::USEPS, Scheme::US0})
    if (include_uv || s != Scheme::UV) specs.push_back({tight_config(s, 1.5, 1e-3, dt), "gauss", nx, steps});
  return specs;
}

/// Criterion 4.
inline CheckResult check_mass(int nx, int steps) {
  return evaluate_mass(run_all(gauss_runs(nx, steps, 1e-4, true)));
}

/// Criterion 5: the criterion-4 settings and again at dt = 1e-2.
inline CheckResult check_energy_laws(int nx, int steps, int large_dt_steps) {
  auto runs = run_all(gauss_runs(nx, steps, 1e-4, false));
  auto big = run_all(gauss_runs(nx, large_dt_steps, 1e-2, false));
  runs.insert(runs.end(), big.begin(), big.end());
  auto r = evaluate_energy_laws(runs);
  long fallback = 0;
  for (const auto& run : runs)
    for (const auto& s : run.steps) fallback += s.used_newton;
  r.detail += "; dt=1e-4 and dt=1e-2, " + std::to_string(fallback) + " steps solved by Newton";
  return r;
}

/// Criteria 6 and 7: cosine preset, p = 1.4.
struct CosineRuns {
  std::vector<RunSeries> runs;
};

inline CosineRuns cosine_runs(int nx, int steps) {
  std::vector<RunSpec> specs;
  specs.push_back({tight_config(Scheme::UV, 1.4, 1e-4, 1e-4), "cosine", nx, steps});
  specs.push_back({tight_config(Scheme::US0, 1.4, 1e-4, 1e-4), "cosine", nx, steps});
  for (double eps : {1e-4, 1e-7}) {
    specs.push_back({tight_config(Scheme::USEPS, 1.4, eps, 1e-4), "cosine", nx, steps});
    specs.push_back({tight_config(Scheme::UVEPS, 1.4, eps, 1e-4), "cosine", nx, steps});
  }
  return {run_all(specs)};
}

/// Criterion 6: E_e nonincreasing within 1e-8 |E_e^{n-1}|.
inline CheckResult evaluate_exact_energy(const CosineRuns& c) {
  CheckResult r;
  r.passed = all_completed(c.runs, r.detail);
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& run : c.runs)
    for (const auto& s : run.steps)
      worst = std::max(worst, (s.energy_exact - s.energy_exact_prev) / std::abs(s.energy_exact_prev));
  if (!(worst <= 1e-8)) r.passed = false;
  r.detail = "max (E^n - E^{n-1}) / |E^{n-1}| = " + fmt("%.2e", worst) + " over " +
             std::to_string(c.runs.size()) + " runs" + (r.detail.empty() ? "" : "; " + r.detail);
  return r;
}

/// Criterion 7: RE <= 0 for US0 and US-eps, RE > 0 somewhere for UV.  UV-eps
/// is reported but not judged.
inline CheckResult evaluate_residual_signs(const CosineRuns& c) {
  CheckResult r;
  r.passed = all_completed(c.runs, r.detail);
  std::string notes;
  for (const auto& run : c.runs) {
    long positive = 0;
    double max_re = -std::numeric_limits<double>::infinity();
    for (const auto& s : run.steps) {
      positive += s.residual_re > 0.0;
      max_re = std::max(max_re, s.residual_re);
    }
    const Scheme sc = run.cfg.scheme;
    bool ok = true;
    if (sc == Scheme::US0 || sc == Scheme::USEPS) ok = positive == 0;
    if (sc == Scheme::UV) ok = positive > 0;
    if (!ok) r.passed = false;
    notes += (notes.empty() ? "" : "; ") + run.label + ": " + std::to_string(positive) +
             " steps RE>0, max RE " + fmt("%.3g", max_re) +
             (sc == Scheme::UVEPS ? (positive ? " (reported)" : " (no positive RE at this scale, reported)")
                                  : (ok ? "" : " [violates]"));
  }
  r.detail = notes + (r.detail.empty() ? "" : "; " + r.detail);
  return r;
}

/// Criterion 8: |min min_u| and max ||Pi^h u_-|| shrink from eps = 1e-3 to 1e-5.
inline CheckResult check_positivity_trend(int nx, int steps) {
  std::vector<RunSpec> specs;
  for (double p : {1.1, 1.5, 1.9})
    for (Scheme s : {Scheme::UVEPS, Scheme::USEPS})
      for (double eps : {1e-3, 1e-5}) specs.push_back({tight_config(s, p, eps, 1e-4), "gauss", nx, steps});
  const auto runs = run_all(specs);
  CheckResult r;
  r.passed = all_completed(runs, r.detail);
  std::string notes;
  for (std::size_t i = 0; i + 1 < runs.size(); i += 2) {
    auto extremes = [](const RunSeries& run) {
      double mn = std::numeric_limits<double>::infinity(), neg = 0.0;
      for (const auto& s : run.steps) {
        mn = std::min(mn, s.min_u);
        neg = std::max(neg, s.negative_part);
      }
      return std::pair{std::abs(mn), neg};
    };
    const auto [min_coarse, neg_coarse] = extremes(runs[i]);
    const auto [min_fine, neg_fine] = extremes(runs[i + 1]);
    const bool ok = min_fine <= min_coarse && neg_fine <= neg_coarse;
    if (!ok) r.passed = false;
    notes += (notes.empty() ? "" : "; ") + std::string(to_string(runs[i].cfg.scheme)) +
             " p=" + fmt("%g", runs[i].cfg.p) + ": |min u| " + fmt("%.2e", min_coarse) + " -> " +
             fmt("%.2e", min_fine) + ", ||u_-|| " + fmt("%.2e", neg_coarse) + " -> " +
             fmt("%.2e", neg_fine) + (ok ? "" : " [violates]");
  }
  r.detail = notes + (r.detail.empty() ? "" : "; " + r.detail);
  return r;
}

/// Criterion 9: spatially constant data follow the scalar recurrence.
inline CheckResult check_constant_state(int nx, int steps) {
  const StructuredTriMesh mesh(nx, nx, 2.0, 2.0);
  const double p = 1.5, k = 0.1, eps = 1e-3;
  double worst = 0.0;
  for (Scheme sc : {Scheme::UV, Scheme::UVEPS}) {
    SchemeConfig cfg = tight_config(sc, p, eps, k);
    cfg.picard_tol = 1e-13;
    cfg.linear_tol = 1e-14;
    const SchemeSolver solver(mesh, cfg);
    const double source =
        sc == Scheme::UV ? std::pow(2.0, p) : p * (p - 1.0) * RegularizedPotential(p, eps).f_value(2.0);
    auto state = solver.init_state(constant_preset(2.0, 1.0));
    double v = 1.0;
    for (int n = 0; n < steps; ++n) {
      state = solver.step(state).first;
      v = (v + k * source) / (1.0 + k);
      for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
        worst = std::max(worst, std::abs(state.u[i] - 2.0) / 2.0);
        worst = std::max(worst, std::abs(state.v[i] - v) / std::max(1.0, std::abs(v)));
      }
    }
  }
  CheckResult r;
  r.passed = worst <= 1e-12;
  r.detail = "max relative deviation from the scalar recurrence " + fmt("%.2e", worst) + " (UV, UVEPS; " +
             std::to_string(steps) + " steps)";
  return r;
}

/// Criterion 10: one step per scheme against the dense brute-force oracle.
inline CheckResult check_dense_oracle(int nx, double dt) {
  const StructuredTriMesh mesh(nx, nx, 2.0, 2.0);
  double worst = 0.0;
  std::string notes;
  for (Scheme sc : {Scheme::UV, Scheme::UVEPS, Scheme::USEPS, Scheme::US0}) {
    SchemeConfig cfg = tight_config(sc, 1.5, 1e-2, dt);
    cfg.picard_tol = 1e-14;
    cfg.linear_tol = 1e-15;
    const SchemeSolver solver(mesh, cfg);
    const auto prev = solver.init_state(gauss_preset());
    const auto next = solver.step(prev).first;
    const auto ref = oracle::dense_step(mesh, cfg, prev.u.data(), prev.v.data(), prev.sigma.data());
    double gap = 0.0;
    auto cmp = [&gap](const std::vector<double>& a, const std::vector<double>& b) {
      for (std::size_t i = 0; i < b.size(); ++i)
        gap = std::max(gap, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
    };
    cmp(next.u.data(), ref.u);
    cmp(next.v.data(), ref.v);
    if (uses_sigma(sc)) cmp(next.sigma.data(), ref.sigma);
    worst = std::max(worst, gap);
    notes += (notes.empty() ? "" : ", ") + std::string(to_string(sc)) + " " + fmt("%.1e", gap);
  }
  CheckResult r;
  r.passed = worst <= 1e-9;
  r.detail = "max DOF gap " + fmt("%.2e", worst) + " (" + notes + ")";
  return r;
}

// ---------------------------------------------------------------------------

/// Every check of the given level, numbered by acceptance criterion; `only`
/// restricts the run to the listed criteria.
inline std::vector<std::pair<int, CheckResult>> run_suite(
    Level level, const std::function<void(int, const CheckResult&)>& on_result = {},
    const std::set<int>& only = {}) {
  const bool full = level == Level::full;
  std::vector<std::pair<int, CheckResult>> out;
  auto wanted = [&only](int id) { return only.empty() || only.count(id) > 0; };
  auto emit = [&](int id, const std::string& name, auto&& fn) {
    if (!wanted(id)) return;
    CheckResult r = timed(name, fn);
    if (on_result) on_result(id, r);
    out.emplace_back(id, std::move(r));
  };
  const int samples = full ? 1000 : 100;
  emit(1, "element identities", [&] { return check_element_identities(8, samples); });
  emit(2, "spectral and Lipschitz bounds", [&] { return check_lambda_bounds(8, samples); });
  emit(3, "regularized potential", [&] { return check_potential_suite(10000, 2000); });
  emit(4, "mass conservation", [&] { return check_mass(full ? 20 : 8, full ? 200 : 20); });
  emit(5, "discrete energy laws", [&] { return check_energy_laws(full ? 20 : 8, full ? 200 : 20, full ? 200 : 10); });
  if (full) {
    std::optional<CosineRuns> cos;
    auto cosine = [&]() -> const CosineRuns& {
      if (!cos) cos = cosine_runs(20, 300);
      return *cos;
    };
    emit(6, "exact energy decreases", [&] { return evaluate_exact_energy(cosine()); });
    emit(7, "energy residual signs", [&] { return evaluate_residual_signs(cosine()); });
    emit(8, "positivity trend in eps", [&] { return check_positivity_trend(20, 200); });
  }
  emit(9, "constant-state recurrence", [&] { return check_constant_state(full ? 8 : 4, 20); });
  emit(10, "dense oracle step", [&] { return check_dense_oracle(2, 1e-3); });
  return out;
}

}  // namespace chemrep::verify
