#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chemrep/anderson.hpp"
#include "chemrep/fem.hpp"
#include "chemrep/lambda_ops.hpp"
#include "chemrep/linsolve.hpp"
#include "chemrep/mesh.hpp"
#include "chemrep/presets.hpp"
#include "chemrep/regularization.hpp"
#include "chemrep/sparse.hpp"

namespace chemrep {

enum class Scheme { UV, UVEPS, USEPS, US0 };

inline std::string_view to_string(Scheme s) noexcept {
  switch (s) {
    case Scheme::UV: return "UV";
    case Scheme::UVEPS: return "UVEPS";
    case Scheme::USEPS: return "USEPS";
    case Scheme::US0: return "US0";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view name) {
  for (Scheme s : {Scheme::UV, Scheme::UVEPS, Scheme::USEPS, Scheme::US0})
    if (name == to_string(s)) return s;
  throw std::invalid_argument("unknown scheme '" + std::string(name) +
                              "' (expected UV, UVEPS, USEPS or US0)");
}

/// Whether the scheme advances sigma = grad v instead of v.
inline bool uses_sigma(Scheme s) noexcept { return s == Scheme::USEPS || s == Scheme::US0; }
inline bool uses_eps(Scheme s) noexcept { return s == Scheme::UVEPS || s == Scheme::USEPS; }

/// How each time step's nonlinear system is solved.  `picard` runs the
/// scheme's Picard sweeps; `newton` solves the same equations by Newton's method.
enum class NonlinearMethod { picard, newton };

inline std::string_view to_string(NonlinearMethod m) noexcept {
  return m == NonlinearMethod::picard ? "picard" : "newton";
}

inline NonlinearMethod parse_method(std::string_view name) {
  if (name == "picard") return NonlinearMethod::picard;
  if (name == "newton") return NonlinearMethod::newton;
  throw std::invalid_argument("unknown nonlinear method '" + std::string(name) +
                              "' (expected picard or newton)");
}

struct SchemeConfig {
  Scheme scheme = Scheme::UVEPS;
  double p = 1.5;
  double eps = 1e-3;  // read only by UVEPS and USEPS
  double dt = 1e-4;
  double picard_tol = 1e-3;
  int picard_max = 200;
  double linear_tol = 1e-12;
  int anderson_depth = 5;  // 0 gives the plain Picard sweeps
  NonlinearMethod method = NonlinearMethod::picard;
  bool newton_fallback = true;  // retry a failed Picard step with Newton

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be > 0");
    if (!(p > 1.0 && p < 2.0)) throw std::invalid_argument("p must lie in (1, 2)");
    if (uses_eps(scheme) && !(eps > 0.0 && eps < 1.0))
      throw std::invalid_argument("eps must lie in (0, 1)");
    if (!(picard_tol > 0.0)) throw std::invalid_argument("picard_tol must be > 0");
    if (picard_max < 1) throw std::invalid_argument("picard_max must be >= 1");
    if (!(linear_tol > 0.0)) throw std::invalid_argument("linear_tol must be > 0");
    if (anderson_depth < 0) throw std::invalid_argument("anderson_depth must be >= 0");
  }
};

/// Time level n. `v` is always populated; `sigma` only for the sigma schemes.
struct SchemeState {
  ScalarField u;
  ScalarField v;
  VectorField sigma;
  long step = 0;
  double time = 0.0;
};

struct PicardReport {
  int iterations = 0;
  double change = 0.0;  // final max relative L^2 change
  std::size_t solver_iterations = 0;  // max over the linear solves of the step
  bool used_newton = false;
};

class PicardError : public std::runtime_error {
 public:
  PicardError(const std::string& what, SchemeState last, int iterations, double change)
      : std::runtime_error(what), last_(std::move(last)), iterations_(iterations), change_(change) {}
  const SchemeState& last_iterate() const noexcept { return last_; }
  int iterations() const noexcept { return iterations_; }
  double change() const noexcept { return change_; }

 private:
  SchemeState last_;
  int iterations_;
  double change_;
};

/// s_+^q at a node, with 0^q = 0 for q > 0.
inline double pos_pow(double s, double q) noexcept { return s > 0.0 ? std::exp(q * std::log(s)) : 0.0; }

/// d/ds s_+^q, taken as 0 for s <= 0.
inline double pos_pow_slope(double s, double q) noexcept {
  return s > 0.0 ? q * std::exp((q - 1.0) * std::log(s)) : 0.0;
}

/**
 * Time stepper for one (mesh, configuration) pair.  All operators that do not
 * depend on the unknowns are assembled once at construction.
 */
class SchemeSolver {
 public:
  SchemeSolver(const StructuredTriMesh& mesh, SchemeConfig cfg, LambdaBuilder lambda2_builder = {})
      : cfg_((cfg.validate(), cfg)),
        space_(mesh),
        lambda2_(lambda2_builder ? std::move(lambda2_builder) : LambdaBuilder(&lambda2)) {
    const double inv_k = 1.0 / cfg_.dt;
    if (uses_eps(cfg_.scheme)) pot_.emplace(cfg_.p, cfg_.eps);
    lumped_over_k_ = space_.weights;
    for (double& w : lumped_over_k_) w *= inv_k;
    const auto lumped_k = SparseOperator::diagonal(lumped_over_k_);
    u_base_ = combine(1.0, lumped_k, 1.0, space_.stiff);
    if (cfg_.scheme == Scheme::UV)
      u_base_ = linear_combination({{inv_k, &space_.mass}, {1.0, &space_.stiff}});
    v_system_ = linear_combination({{inv_k + 1.0, &space_.mass}, {1.0, &space_.stiff}});
    if (uses_sigma(cfg_.scheme)) {
      sigma_system_ = constrain(
          linear_combination({{inv_k + 1.0, &space_.vmass}, {1.0, &space_.rotdiv}}),
          space_.sigma_mask);
    }
  }

  const SchemeConfig& config() const noexcept { return cfg_; }
  const FemSpace& space() const noexcept { return space_; }
  const StructuredTriMesh& mesh() const noexcept { return *space_.mesh; }
  /// Present for UVEPS and USEPS only.
  const std::optional<RegularizedPotential>& potential() const noexcept { return pot_; }

  SolverConfig linear_config() const { return SolverConfig{cfg_.linear_tol, 0}; }

  /// u^0 = Q^h u0, v^0 = R^h v0 and, for the sigma schemes, sigma^0 = Q~^h(grad v^0).
  SchemeState init_state(const InitialCondition& ic) const {
    const auto& mesh = this->mesh();
    for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
      const auto& x = mesh.node(i);
      if (ic.u0(x[0], x[1]) < 0.0 || ic.v0(x[0], x[1]) < 0.0) {
        throw std::invalid_argument("initial data '" + ic.name + "' is negative at node " +
                                    std::to_string(i));
      }
    }
    SchemeState s;
    s.u = project_Qh(mesh, ic.u0);
    s.v = project_Rh(mesh, ic.v0, ic.grad_v0, linear_config());
    if (uses_sigma(cfg_.scheme))
      s.sigma = project_Qh_vec(mesh, grad_p1(mesh, s.v), true, linear_config());
    return s;
  }

  std::pair<SchemeState, PicardReport> step(const SchemeState& prev) const {
    if (cfg_.method == NonlinearMethod::newton) return step_newton(prev);
    try {
      switch (cfg_.scheme) {
        case Scheme::UV: return step_uv(prev);
        case Scheme::UVEPS: return step_uveps(prev);
        case Scheme::USEPS: return step_useps(prev);
        case Scheme::US0: return step_us0(prev);
      }
    } catch (const PicardError&) {
      if (!cfg_.newton_fallback) throw;
    } catch (const SolverError&) {
      if (!cfg_.newton_fallback) throw;
    }
    return step_newton(prev);
  }

  /// Backward Euler with Picard (iv).
  std::pair<SchemeState, PicardReport> step_uv(const SchemeState& prev) const {
    require(Scheme::UV);
    const auto rhs_u = vec::scaled(1.0 / cfg_.dt, space_.mass * prev.u);
    return picard(
        prev,
        [&](const SchemeState& it, std::size_t& iters) {
          const auto a = combine(1.0, u_base_, 1.0, convection_u(mesh(), grad_p1(mesh(), it.v)));
          return solve(a, rhs_u, it.u.data(), false, iters);
        },
        [&](SchemeState& it, std::size_t& iters) {
          auto load = v_history(prev.v);
          const auto prod = compose(it.u.data(), [&](double s) { return pos_pow(s, cfg_.p); });
          for (std::size_t i = 0; i < load.size(); ++i) load[i] += space_.weights[i] * prod[i];
          it.v = ScalarField(solve(v_system_, load, it.v.data(), true, iters));
        },
        [](SchemeState& it) -> std::vector<double>& { return it.v.data(); }, false);
  }

  /// Scheme UV-eps with Picard (i).
  std::pair<SchemeState, PicardReport> step_uveps(const SchemeState& prev) const {
    require(Scheme::UVEPS);
    const auto& pot = *pot_;
    const auto history = lumped_history(prev.u);
    const double coef = cfg_.p * (cfg_.p - 1.0);
    return picard(
        prev,
        [&](const SchemeState& it, std::size_t& iters) {
          const auto flux = apply_elementwise(lambda2_(pot, mesh(), it.u.data()), grad_p1(mesh(), it.v));
          auto rhs = history;
          vec::axpy(-1.0, gradient_load(mesh(), flux), rhs);
          return solve(u_base_, rhs, it.u.data(), true, iters);
        },
        [&](SchemeState& it, std::size_t& iters) {
          auto load = v_history(prev.v);
          const auto f = compose(it.u.data(), [&](double s) { return pot.f_value(s); });
          vec::axpy(coef, space_.mass * f, load);
          it.v = ScalarField(solve(v_system_, load, it.v.data(), true, iters));
        },
        [](SchemeState& it) -> std::vector<double>& { return it.v.data(); }, false);
  }

  /// Scheme US-eps with Picard (ii); v is recovered after convergence.
  std::pair<SchemeState, PicardReport> step_useps(const SchemeState& prev) const {
    require(Scheme::USEPS);
    const auto& pot = *pot_;
    const auto history = lumped_history(prev.u);
    auto result = picard(
        prev,
        [&](const SchemeState& it, std::size_t& iters) {
          const auto a = combine(1.0, u_base_, 1.0, convection_u(mesh(), it.sigma));
          return solve(a, history, it.u.data(), false, iters);
        },
        [&](SchemeState& it, std::size_t& iters) {
          const auto g = grad_p1(mesh(), compose(it.u.data(), [&](double s) { return pot.f_prime(s); }));
          sigma_solve(prev, it, weighted_vector_load(mesh(), it.u.data(), g, cfg_.p), iters);
        },
        [](SchemeState& it) -> std::vector<double>& { return it.sigma.data(); },
        true);
    finish_recovery(prev, result);
    return result;
  }

  /// Scheme US0 with Picard (iii); v is recovered after convergence.
  std::pair<SchemeState, PicardReport> step_us0(const SchemeState& prev) const {
    require(Scheme::US0);
    const double p = cfg_.p;
    const auto history = lumped_history(prev.u);
    auto result = picard(
        prev,
        [&](const SchemeState& it, std::size_t& iters) {
          const auto a = combine(1.0, u_base_, 1.0, convection_u(mesh(), it.sigma));
          auto rhs = history;
          vec::axpy(1.0, space_.stiff * it.u.data(), rhs);
          vec::axpy(-1.0, nonlinear_diffusion(it.u.data()), rhs);
          return solve(a, rhs, it.u.data(), false, iters);
        },
        [&](SchemeState& it, std::size_t& iters) {
          const auto g =
              grad_p1(mesh(), compose(it.u.data(), [&](double s) { return pos_pow(s, p - 1.0); }));
          sigma_solve(prev, it, weighted_vector_load(mesh(), it.u.data(), g, p / (p - 1.0)), iters);
        },
        [](SchemeState& it) -> std::vector<double>& { return it.sigma.data(); },
        true);
    finish_recovery(prev, result);
    return result;
  }

  /// One SPD solve for v^n given u^n and v^{n-1}; the production load is
  /// integrated by vertex quadrature.  Uses F_eps for USEPS and (u_+)^p otherwise.
  ScalarField recover_v(std::span<const double> u, const ScalarField& v_prev,
                        std::size_t* iterations = nullptr) const {
    auto load = v_history(v_prev);
    if (cfg_.scheme == Scheme::USEPS) {
      const double coef = cfg_.p * (cfg_.p - 1.0);
      for (std::size_t i = 0; i < load.size(); ++i)
        load[i] += coef * space_.weights[i] * pot_->f_value(u[i]);
    } else {
      for (std::size_t i = 0; i < load.size(); ++i)
        load[i] += space_.weights[i] * pos_pow(u[i], cfg_.p);
    }
    std::size_t iters = 0;
    auto v = solve(v_system_, load, v_prev.data(), true, iters);
    if (iterations) *iterations = iters;
    return ScalarField(std::move(v));
  }

  /// Unknowns stacked as [u; v] or [u; sigma].
  std::vector<double> stack(const SchemeState& s) const {
    std::vector<double> x(s.u.data());
    const auto& w = uses_sigma(cfg_.scheme) ? s.sigma.data() : s.v.data();
    x.insert(x.end(), w.begin(), w.end());
    return x;
  }

  /// Residual of the scheme's discrete equations at x, given level n-1.  The
  /// Picard sweeps converge to its zeros.
  std::vector<double> residual(const SchemeState& prev, std::span<const double> x) const {
    const std::size_t n = space_.nodes();
    const auto u = x.first(n);
    const auto w = x.subspan(n);
    std::vector<double> ru = u_base_ * u;
    std::vector<double> rw;
    const double p = cfg_.p;
    switch (cfg_.scheme) {
      case Scheme::UV: {
        vec::axpy(1.0, convection_u(mesh(), grad_p1(mesh(), w)) * u, ru);
        vec::axpy(-1.0 / cfg_.dt, space_.mass * prev.u, ru);
        rw = v_system_ * w;
        vec::axpy(-1.0, v_history(prev.v), rw);
        for (std::size_t i = 0; i < n; ++i) rw[i] -= space_.weights[i] * pos_pow(u[i], p);
        break;
      }
      case Scheme::UVEPS: {
        const auto& pot = *pot_;
        vec::axpy(-1.0, lumped_history(prev.u), ru);
        vec::axpy(1.0, gradient_load(mesh(), apply_elementwise(lambda2_(pot, mesh(), u), grad_p1(mesh(), w))), ru);
        rw = v_system_ * w;
        vec::axpy(-1.0, v_history(prev.v), rw);
        const auto f = compose(u, [&](double s) { return pot.f_value(s); });
        vec::axpy(-p * (p - 1.0), space_.mass * f, rw);
        break;
      }
      case Scheme::USEPS:
      case Scheme::US0: {
        const VectorField sigma(std::vector<double>(w.begin(), w.end()));
        vec::axpy(1.0, convection_u(mesh(), sigma) * u, ru);
        vec::axpy(-1.0, lumped_history(prev.u), ru);
        std::vector<double> load;
        if (cfg_.scheme == Scheme::USEPS) {
          const auto& pot = *pot_;
          const auto g = grad_p1(mesh(), compose(u, [&](double s) { return pot.f_prime(s); }));
          load = weighted_vector_load(mesh(), u, g, p);
        } else {
          vec::axpy(-1.0, space_.stiff * u, ru);
          vec::axpy(1.0, nonlinear_diffusion(u), ru);
          const auto g = grad_p1(mesh(), compose(u, [&](double s) { return pos_pow(s, p - 1.0); }));
          load = weighted_vector_load(mesh(), u, g, p / (p - 1.0));
        }
        vec::axpy(1.0 / cfg_.dt, space_.vmass * prev.sigma.data(), load);
        zero_constrained(load, space_.sigma_mask);
        rw = sigma_system_ * w;
        vec::axpy(-1.0, load, rw);
        break;
      }
    }
    ru.insert(ru.end(), rw.begin(), rw.end());
    return ru;
  }

  /// Exact Jacobian of `residual` (up to the near-equal-values limit in Lambda^2).
  SparseOperator jacobian(std::span<const double> x) const {
    const std::size_t n = space_.nodes();
    const int off = static_cast<int>(n);
    const auto u = x.first(n);
    const auto w = x.subspan(n);
    const double p = cfg_.p;
    const auto& mesh = this->mesh();
    std::vector<Triplet> t;
    auto add = [&t](const SparseOperator& a, int ro, int co, double scale) {
      for (auto tr : a.triplets()) t.push_back({tr.row + ro, tr.col + co, scale * tr.value});
    };
    add(u_base_, 0, 0, 1.0);

    switch (cfg_.scheme) {
      case Scheme::UV: {
        add(convection_u(mesh, grad_p1(mesh, w)), 0, 0, 1.0);
        for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
          const auto& el = mesh.element(e);
          const auto& geo = mesh.geometry(e);
          const double mean_u = (u[el[0]] + u[el[1]] + u[el[2]]) / 3.0;
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
              t.push_back({el[a], off + el[b], geo.area * mean_u * dot(geo.grads[a], geo.grads[b])});
        }
        add(v_system_, off, off, 1.0);
        for (std::size_t i = 0; i < n; ++i)
          t.push_back({off + int(i), int(i), -space_.weights[i] * pos_pow_slope(u[i], p)});
        break;
      }
      case Scheme::UVEPS: {
        const auto& pot = *pot_;
        const auto lam = lambda2_(pot, mesh, u);
        const auto gv = grad_p1(mesh, w);
        for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
          const auto& el = mesh.element(e);
          const auto& geo = mesh.geometry(e);
          const auto dirs = leg_directions(mesh, e);
          for (int l = 0; l < 2; ++l) {
            const auto d = lambda2_partials(pot, u[el[0]], u[el[l + 1]]);
            const double flux = dot(dirs[l], gv[e]);
            for (int a = 0; a < 3; ++a) {
              const double c = geo.area * flux * dot(dirs[l], geo.grads[a]);
              t.push_back({el[a], el[0], c * d[0]});
              t.push_back({el[a], el[l + 1], c * d[1]});
            }
          }
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
              t.push_back({el[a], off + el[b], geo.area * dot(geo.grads[a], lam[e].apply(geo.grads[b]))});
        }
        add(v_system_, off, off, 1.0);
        for (const auto& tr : space_.mass.triplets())
          t.push_back({off + tr.row, tr.col, -p * (p - 1.0) * tr.value * pot.f_prime(u[tr.col])});
        break;
      }
      case Scheme::USEPS:
      case Scheme::US0: {
        const bool eps_scheme = cfg_.scheme == Scheme::USEPS;
        const VectorField sigma(std::vector<double>(w.begin(), w.end()));
        add(convection_u(mesh, sigma), 0, 0, 1.0);
        // g = grad Pi^h h(u) in the sigma load; h = F' (USEPS) or (u_+)^{p-1} (US0)
        auto h = [&](double s) { return eps_scheme ? pot_->f_prime(s) : pos_pow(s, p - 1.0); };
        auto dh = [&](double s) { return eps_scheme ? pot_->f_second(s) : pos_pow_slope(s, p - 1.0); };
        const double scale = eps_scheme ? p : p / (p - 1.0);
        const auto g = grad_p1(mesh, compose(u, h));
        std::vector<double> wgt, qv;
        if (!eps_scheme) {
          add(space_.stiff, 0, 0, -1.0);
          wgt = compose(u, [&](double s) { return pos_pow(s, 2.0 - p); }).data();
          qv = compose(u, [&](double s) { return pos_pow(s, p - 1.0); }).data();
        }
        for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
          const auto& el = mesh.element(e);
          const auto& geo = mesh.geometry(e);
          const double usum = u[el[0]] + u[el[1]] + u[el[2]];
          for (int j = 0; j < 3; ++j) {
            const double int_u_phi = geo.area / 12.0 * (usum + u[el[j]]);
            for (int c = 0; c < 2; ++c) {
              const int col = off + c * off + el[j];
              // d/d sigma of (u sigma, grad phi_i)
              for (int i = 0; i < 3; ++i) t.push_back({el[i], col, geo.grads[i][c] * int_u_phi});
              if (space_.sigma_mask[c * n + el[j]]) continue;
              // d/du of the sigma load
              for (int b = 0; b < 3; ++b) {
                const double d = dh(u[el[b]]) * geo.grads[b][c] * int_u_phi +
                                 g[e][c] * geo.area / 12.0 * (b == j ? 2.0 : 1.0);
                t.push_back({col, el[b], -scale * d});
              }
            }
          }
          if (!eps_scheme) {
            const double mean_w = (wgt[el[0]] + wgt[el[1]] + wgt[el[2]]) / 3.0;
            Vec2 gq{0.0, 0.0};
            for (int a = 0; a < 3; ++a) {
              gq[0] += qv[el[a]] * geo.grads[a][0];
              gq[1] += qv[el[a]] * geo.grads[a][1];
            }
            for (int i = 0; i < 3; ++i)
              for (int b = 0; b < 3; ++b) {
                const double d = pos_pow_slope(u[el[b]], 2.0 - p) / 3.0 * dot(gq, geo.grads[i]) +
                                 mean_w * pos_pow_slope(u[el[b]], p - 1.0) *
                                     dot(geo.grads[b], geo.grads[i]);
                t.push_back({el[i], el[b], geo.area * d / (p - 1.0)});
              }
          }
        }
        add(sigma_system_, off, off, 1.0);
        break;
      }
    }
    return SparseOperator(x.size(), std::move(t));
  }

  /// Newton's method with backtracking on ||residual||, started from level n-1.
  /// Stops on the same relative-change criterion as the Picard sweeps.
  std::pair<SchemeState, PicardReport> step_newton(const SchemeState& prev) const {
    const std::size_t n = space_.nodes();
    SchemeState it = prev;
    it.step = prev.step + 1;
    it.time = static_cast<double>(it.step) * cfg_.dt;
    const SparseOperator& wmass = uses_sigma(cfg_.scheme) ? space_.vmass : space_.mass;
    PicardReport report;
    report.used_newton = true;
    std::vector<double> x = stack(prev);
    std::vector<double> r = residual(prev, x);
    double rnorm = vec::norm2(r);
    auto unstack = [&](const std::vector<double>& z) {
      it.u = ScalarField(std::vector<double>(z.begin(), z.begin() + n));
      std::vector<double> w(z.begin() + n, z.end());
      if (uses_sigma(cfg_.scheme)) it.sigma = VectorField(std::move(w));
      else it.v = ScalarField(std::move(w));
    };
    for (int l = 1; l <= cfg_.picard_max; ++l) {
      report.iterations = l;
      if (rnorm == 0.0) {
        report.change = 0.0;
        break;
      }
      const auto dx = solve_direct(jacobian(x), vec::scaled(-1.0, r)).x;
      // The change is measured on the undamped step, so a short line-search
      // step is never mistaken for convergence.
      std::vector<double> full(x);
      vec::axpy(1.0, dx, full);
      const std::vector<double> u_old(x.begin(), x.begin() + n), w_old(x.begin() + n, x.end());
      const std::vector<double> u_new(full.begin(), full.begin() + n),
          w_new(full.begin() + n, full.end());
      report.change = std::max(relative_change(space_.mass, u_new, u_old),
                               relative_change(wmass, w_new, w_old));
      if (report.change <= cfg_.picard_tol && all_finite(full)) {
        // near the root the residual may already sit at round-off level
        x = std::move(full);
        break;
      }
      double alpha = 1.0;
      std::vector<double> trial;
      std::vector<double> trial_r;
      for (;;) {
        trial = x;
        vec::axpy(alpha, dx, trial);
        bool ok = all_finite(trial);
        if (ok) {
          try {
            trial_r = residual(prev, trial);
            ok = all_finite(trial_r) && vec::norm2(trial_r) <= (1.0 - 1e-4 * alpha) * rnorm;
          } catch (const std::domain_error&) {
            ok = false;
          }
        }
        if (ok) break;
        alpha *= 0.5;
        if (alpha < 1e-10) {
          unstack(x);
          throw PicardError("Newton line search failed at step " + std::to_string(it.step), it, l,
                            report.change);
        }
      }
      x = std::move(trial);
      r = std::move(trial_r);
      rnorm = vec::norm2(r);
      if (l == cfg_.picard_max) {
        unstack(x);
        throw PicardError("Newton iteration did not converge at step " + std::to_string(it.step), it,
                          l, report.change);
      }
    }
    unstack(x);
    std::pair<SchemeState, PicardReport> result{std::move(it), report};
    if (uses_sigma(cfg_.scheme)) finish_recovery(prev, result);
    return result;
  }

  /// N_i = 1/(p-1) ( Pi^h((u_+)^{2-p}) grad Pi^h((u_+)^{p-1}), grad phi_i ), with the
  /// weight integrated exactly as the element mean of its nodal values.
  std::vector<double> nonlinear_diffusion(std::span<const double> u) const {
    const double p = cfg_.p;
    const auto w = compose(u, [&](double s) { return pos_pow(s, 2.0 - p); });
    auto g = grad_p1(mesh(), compose(u, [&](double s) { return pos_pow(s, p - 1.0); }));
    for (std::size_t e = 0; e < g.size(); ++e) {
      const auto& el = mesh().element(e);
      const double mean = (w[el[0]] + w[el[1]] + w[el[2]]) / 3.0;
      g[e] = {mean * g[e][0] / (p - 1.0), mean * g[e][1] / (p - 1.0)};
    }
    return gradient_load(mesh(), g);
  }

 private:
  void require(Scheme s) const {
    if (cfg_.scheme != s)
      throw std::logic_error("step_" + std::string(to_string(s)) + " called on a " +
                             std::string(to_string(cfg_.scheme)) + " solver");
  }

  std::vector<double> lumped_history(const ScalarField& u_prev) const {
    std::vector<double> r(u_prev.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = lumped_over_k_[i] * u_prev[i];
    return r;
  }

  std::vector<double> v_history(const ScalarField& v_prev) const {
    return vec::scaled(1.0 / cfg_.dt, space_.mass * v_prev.data());
  }

  std::vector<double> solve(const SparseOperator& a, std::span<const double> b,
                            const std::vector<double>& guess, bool spd, std::size_t& iters) const {
    auto r = spd ? solve_spd(a, b, linear_config(), guess) : solve_general(a, b, linear_config(), guess);
    iters = std::max(iters, r.iterations);
    return std::move(r.x);
  }

  void sigma_solve(const SchemeState& prev, SchemeState& it, std::vector<double> load,
                   std::size_t& iters) const {
    vec::axpy(1.0 / cfg_.dt, space_.vmass * prev.sigma.data(), load);
    zero_constrained(load, space_.sigma_mask);
    it.sigma = VectorField(solve(sigma_system_, load, it.sigma.data(), true, iters));
  }

  void finish_recovery(const SchemeState& prev, std::pair<SchemeState, PicardReport>& result) const {
    std::size_t iters = 0;
    result.first.v = recover_v(result.first.u.data(), prev.v, &iters);
    result.second.solver_iterations = std::max(result.second.solver_iterations, iters);
  }

  static bool all_finite(const std::vector<double>& x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
  }

  /// Relative L^2 change; falls back to the absolute change when the old
  /// iterate is numerically zero.
  static double relative_change(const SparseOperator& mass, const std::vector<double>& next,
                                const std::vector<double>& old) {
    const double base = l2_norm(mass, old);
    const double diff = l2_norm(mass, vec::diff(next, old));
    return diff / (base > 1e-14 ? base : 1.0);
  }

  /// Fixed-point loop shared by the four Picard methods.  One sweep solves the
  /// u-equation and then the v- (or sigma-) equation; `second` exposes the
  /// second unknown.  Sweeps are combined by Anderson mixing when enabled.
  template <class SolveU, class SolveW, class Second>
  std::pair<SchemeState, PicardReport> picard(const SchemeState& prev, SolveU&& solve_u,
                                              SolveW&& solve_w, Second&& second,
                                              bool sigma) const {
    SchemeState it = prev;
    it.step = prev.step + 1;
    it.time = static_cast<double>(it.step) * cfg_.dt;
    PicardReport report;
    const SparseOperator& wmass = sigma ? space_.vmass : space_.mass;
    const std::size_t nu = it.u.size();
    AndersonMixer mixer(static_cast<std::size_t>(cfg_.anderson_depth));
    std::vector<double> x(it.u.data());
    x.insert(x.end(), second(it).begin(), second(it).end());
    // iterates this far beyond the data have diverged even if the change is small
    const double blowup = 1e8 * std::max(vec::norm2(x), 1.0);
    for (int l = 1; l <= cfg_.picard_max; ++l) {
      const std::vector<double> u_old(x.begin(), x.begin() + nu);
      const std::vector<double> w_old(x.begin() + nu, x.end());
      it.u = ScalarField(u_old);
      second(it) = w_old;
      it.u = ScalarField(solve_u(it, report.solver_iterations));
      solve_w(it, report.solver_iterations);
      report.iterations = l;
      report.change = std::max(relative_change(space_.mass, it.u.data(), u_old),
                               relative_change(wmass, second(it), w_old));
      if (!all_finite(it.u.data()) || !all_finite(second(it)) || !std::isfinite(report.change) ||
          std::hypot(vec::norm2(it.u.data()), vec::norm2(second(it))) > blowup) {
        throw PicardError("Picard iteration diverged at step " +
                              std::to_string(it.step),
                          it, l, report.change);
      }
      if (report.change <= cfg_.picard_tol) return {std::move(it), report};
      std::vector<double> g(it.u.data());
      g.insert(g.end(), second(it).begin(), second(it).end());
      x = mixer.next(x, g);
    }
    throw PicardError("Picard iteration did not converge at step " + std::to_string(it.step) +
                          " (change " + std::to_string(report.change) + " after " +
                          std::to_string(cfg_.picard_max) + " iterations)",
                      it, cfg_.picard_max, report.change);
  }

  SchemeConfig cfg_;
  FemSpace space_;
  LambdaBuilder lambda2_;
  std::optional<RegularizedPotential> pot_;
  std::vector<double> lumped_over_k_;
  SparseOperator u_base_;        // D/k + S (M/k + S for UV)
  SparseOperator v_system_;      // (1/k + 1) M + S
  SparseOperator sigma_system_;  // constrained (1/k + 1) M_vec + rot-rot + div-div
};

}  // namespace chemrep
