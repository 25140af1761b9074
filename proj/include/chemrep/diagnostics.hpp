#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "chemrep/fem.hpp"
#include "chemrep/linsolve.hpp"
#include "chemrep/regularization.hpp"
#include "chemrep/schemes.hpp"

namespace chemrep {

/// (u, 1)^h
inline double mass(const FemSpace& space, std::span<const double> u) {
  return space.lumped_integral(u);
}

inline double min_nodal(std::span<const double> f) {
  if (f.empty()) throw std::invalid_argument("min_nodal: empty field");
  return *std::min_element(f.begin(), f.end());
}

/// ||Pi^h(u_-)||_0 with u_- = min(u, 0).
inline double negative_part_norm(const FemSpace& space, std::span<const double> u) {
  const auto neg = compose(u, [](double s) { return std::min(s, 0.0); });
  return space.l2(neg.data());
}

/// Int (1/(p-1)) (u_+)^p + 1/2 ||grad v||^2, the first term by vertex quadrature.
inline double energy_exact(const FemSpace& space, double p, std::span<const double> u,
                           std::span<const double> v) {
  const auto up = compose(u, [p](double s) { return pos_pow(s, p); });
  return space.lumped_integral(up.data()) / (p - 1.0) + 0.5 * space.grad_sq(v);
}

/// The modified energy each scheme dissipates; UV has none and reports the exact energy.
inline double energy_modified(const SchemeSolver& solver, const SchemeState& s) {
  const auto& cfg = solver.config();
  const auto& space = solver.space();
  const double p = cfg.p;
  switch (cfg.scheme) {
    case Scheme::UV: return energy_exact(space, p, s.u.data(), s.v.data());
    case Scheme::UVEPS:
    case Scheme::USEPS: {
      const auto& pot = *solver.potential();
      const auto f = compose(s.u.data(), [&](double x) { return pot.f_value(x); });
      const double quad = cfg.scheme == Scheme::UVEPS ? 0.5 * space.grad_sq(s.v.data())
                                                     : 0.5 * space.vmass.bilinear(s.sigma, s.sigma);
      return p * space.lumped_integral(f.data()) + quad;
    }
    case Scheme::US0: {
      const auto up = compose(s.u.data(), [p](double x) { return pos_pow(x, p); });
      return space.lumped_integral(up.data()) / (p - 1.0) +
             0.5 * space.vmass.bilinear(s.sigma, s.sigma);
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

enum class LaplacianVariant { lumped, consistent };

/// |Delta_h v|^2 with Delta_h = -D^{-1} S (lumped) or -M^{-1} S (consistent).
inline double discrete_laplacian_sq(const FemSpace& space, std::span<const double> v,
                                    LaplacianVariant variant, const SolverConfig& cfg = {}) {
  const auto sv = space.stiff * v;
  if (variant == LaplacianVariant::lumped) {
    double s = 0.0;
    for (std::size_t i = 0; i < sv.size(); ++i) s += sv[i] * sv[i] / space.weights[i];
    return s;
  }
  const auto w = solve_spd(space.mass, sv, cfg).x;
  return vec::dot(sv, w);
}

struct ResidualRE {
  double dt_energy = 0.0;       // delta_t E_e
  double u_dissipation = 0.0;   // (4/p) ||grad Pi^h((u_+)^{p/2})||^2
  double laplacian = 0.0;       // ||Delta_h v||^2
  double grad_v = 0.0;          // ||grad v||^2
  double total() const noexcept { return dt_energy + u_dissipation + laplacian + grad_v; }
};

/// Discrete energy-law residual for the exact energy between consecutive states.
inline ResidualRE residual_RE(const FemSpace& space, double p, double dt,
                              std::span<const double> u_prev, std::span<const double> v_prev,
                              std::span<const double> u, std::span<const double> v,
                              LaplacianVariant variant = LaplacianVariant::lumped) {
  if (u_prev.size() != u.size() || v_prev.size() != v.size() || u.size() != space.nodes())
    throw std::invalid_argument("residual_RE: states do not share the mesh");
  ResidualRE r;
  r.dt_energy = (energy_exact(space, p, u, v) - energy_exact(space, p, u_prev, v_prev)) / dt;
  const auto half = compose(u, [p](double s) { return pos_pow(s, 0.5 * p); });
  r.u_dissipation = 4.0 / p * space.grad_sq(half.data());
  r.laplacian = discrete_laplacian_sq(space, v, variant);
  r.grad_v = space.grad_sq(v);
  return r;
}

/// Terms of a scheme's discrete energy law between levels n-1 and n.
/// `lhs` is the inequality's left side (must be <= 0); `identity` is the
/// left side of the underlying equality, which vanishes at an exact solution.
struct EnergyLaw {
  double energy_prev = 0.0;
  double energy_curr = 0.0;
  double lhs = 0.0;
  double identity = 0.0;
};

/// Energy law of the solver's scheme.  For UVEPS, ||(A_h - I) v||^2 is v^T S M^{-1} S v.
inline EnergyLaw energy_law(const SchemeSolver& solver, const SchemeState& prev,
                            const SchemeState& curr) {
  const auto& cfg = solver.config();
  const auto& space = solver.space();
  const double p = cfg.p, k = cfg.dt;
  EnergyLaw law;
  law.energy_prev = energy_modified(solver, prev);
  law.energy_curr = energy_modified(solver, curr);
  const double dt_energy = (law.energy_curr - law.energy_prev) / k;
  const auto du = vec::scaled(1.0 / k, vec::diff(curr.u.data(), prev.u.data()));

  switch (cfg.scheme) {
    case Scheme::UV:
      throw std::invalid_argument("energy_law: scheme UV has no discrete energy law");
    case Scheme::UVEPS:
    case Scheme::USEPS: {
      const auto& pot = *solver.potential();
      const double floor = std::pow(pot.eps(), 2.0 - p);
      const auto fp = compose(curr.u.data(), [&](double s) { return pot.f_prime(s); });
      // p (delta_t u, F'(u))^h + p int grad u . Lambda1^{-1} grad u, the latter
      // equal to p (grad u, grad Pi^h F'(u)) by the chain-rule identity.
      const double u_terms =
          p * space.lumped_dot(du, fp.data()) + p * space.stiff.bilinear(curr.u, fp.data());
      const double u_lower = k * floor * p / 2.0 * space.l2(du) * space.l2(du) +
                             p * floor * space.grad_sq(curr.u.data());
      double w_terms = 0.0, w_identity_only = 0.0;
      if (cfg.scheme == Scheme::UVEPS) {
        const auto dv = vec::diff(curr.v.data(), prev.v.data());
        const double half_dt_grad = 0.5 * (space.grad_sq(curr.v.data()) - space.grad_sq(prev.v.data())) / k;
        w_terms = k / 2.0 * space.grad_sq(dv) / (k * k) +
                  discrete_laplacian_sq(space, curr.v.data(), LaplacianVariant::consistent,
                                        solver.linear_config()) +
                  space.grad_sq(curr.v.data());
        w_identity_only = half_dt_grad;
      } else {
        const auto ds = vec::diff(curr.sigma.data(), prev.sigma.data());
        const double half_dt_sq =
            0.5 * (space.vmass.bilinear(curr.sigma, curr.sigma) - space.vmass.bilinear(prev.sigma, prev.sigma)) / k;
        w_terms = k / 2.0 * space.vmass.bilinear(ds, ds) / (k * k) +
                  space.vmass.bilinear(curr.sigma, curr.sigma) +
                  space.rotdiv.bilinear(curr.sigma, curr.sigma);
        w_identity_only = half_dt_sq;
      }
      law.lhs = dt_energy + u_lower + w_terms;
      law.identity = u_terms + w_identity_only + w_terms;
      return law;
    }
    case Scheme::US0: {
      const auto ds = vec::diff(curr.sigma.data(), prev.sigma.data());
      const auto w = compose(curr.u.data(), [p](double s) { return pos_pow(s, 2.0 - p); });
      const auto q = compose(curr.u.data(), [p](double s) { return pos_pow(s, p - 1.0); });
      const auto g = grad_p1(solver.mesh(), q.data());
      double diss = 0.0;
      for (std::size_t e = 0; e < g.size(); ++e) {
        const auto& el = solver.mesh().element(e);
        const double mean = (w[el[0]] + w[el[1]] + w[el[2]]) / 3.0;
        diss += solver.mesh().geometry(e).area * mean * dot(g[e], g[e]);
      }
      diss *= p / ((p - 1.0) * (p - 1.0));
      const double sig_sq = space.vmass.bilinear(curr.sigma, curr.sigma);
      const double w_terms = k / 2.0 * space.vmass.bilinear(ds, ds) / (k * k) + diss + sig_sq +
                             space.rotdiv.bilinear(curr.sigma, curr.sigma);
      law.lhs = dt_energy + w_terms;
      const double half_dt_sq = 0.5 * (sig_sq - space.vmass.bilinear(prev.sigma, prev.sigma)) / k;
      law.identity = p / (p - 1.0) * space.lumped_dot(du, q.data()) + half_dt_sq + w_terms;
      return law;
    }
  }
  return law;
}

/// Mean-v balance residual: delta_t int v + int v - int (production) for the
/// scheme's own production load.
inline double mean_v_balance(const SchemeSolver& solver, const SchemeState& prev,
                             const SchemeState& curr) {
  const auto& cfg = solver.config();
  const auto& space = solver.space();
  const auto ones = std::vector<double>(space.nodes(), 1.0);
  const double int_v = space.mass.bilinear(ones, curr.v.data());
  const double int_prev = space.mass.bilinear(ones, prev.v.data());
  double production = 0.0;
  const double p = cfg.p;
  switch (cfg.scheme) {
    case Scheme::UVEPS: {
      const auto& pot = *solver.potential();
      const auto f = compose(curr.u.data(), [&](double s) { return pot.f_value(s); });
      production = p * (p - 1.0) * space.mass.bilinear(ones, f.data());
      break;
    }
    case Scheme::USEPS: {
      const auto& pot = *solver.potential();
      const auto f = compose(curr.u.data(), [&](double s) { return pot.f_value(s); });
      production = p * (p - 1.0) * space.lumped_integral(f.data());
      break;
    }
    case Scheme::UV:
    case Scheme::US0: {
      const auto f = compose(curr.u.data(), [p](double s) { return pos_pow(s, p); });
      production = space.lumped_integral(f.data());
      break;
    }
  }
  return (int_v - int_prev) / cfg.dt + int_v - production;
}

/// Per-step diagnostics written to series.csv.
struct RunRecord {
  long step = 0;
  double time = 0.0;
  double mass = 0.0;
  double energy_modified = 0.0;
  double energy_exact = 0.0;
  std::optional<double> residual_RE;  // undefined at step 0
  double min_u = 0.0;
  double min_v = 0.0;
  int picard_iters = 0;
  std::size_t solver_iters = 0;
  double negative_part = 0.0;  // ||Pi^h(u_-)||_0
};

inline RunRecord make_record(const SchemeSolver& solver, const SchemeState& s,
                             const SchemeState* prev, const PicardReport* report) {
  const auto& space = solver.space();
  const double p = solver.config().p;
  RunRecord r;
  r.step = s.step;
  r.time = s.time;
  r.mass = mass(space, s.u.data());
  r.energy_modified = energy_modified(solver, s);
  r.energy_exact = energy_exact(space, p, s.u.data(), s.v.data());
  if (prev) {
    r.residual_RE = residual_RE(space, p, solver.config().dt, prev->u.data(), prev->v.data(),
                                s.u.data(), s.v.data())
                        .total();
  }
  r.min_u = min_nodal(s.u.data());
  r.min_v = min_nodal(s.v.data());
  if (report) {
    r.picard_iters = report->iterations;
    r.solver_iters = report->solver_iterations;
  }
  r.negative_part = negative_part_norm(space, s.u.data());
  return r;
}

}  // namespace chemrep
