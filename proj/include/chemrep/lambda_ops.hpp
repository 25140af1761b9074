#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "chemrep/fem.hpp"
#include "chemrep/mesh.hpp"
#include "chemrep/regularization.hpp"

namespace chemrep {

/// Symmetric 2x2 matrix.
struct Sym2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;

  Vec2 apply(const Vec2& g) const noexcept { return {xx * g[0] + xy * g[1], xy * g[0] + yy * g[1]}; }

  /// Eigenvalues in ascending order.  The one of smaller magnitude comes from
  /// the determinant, so widely separated eigenvalues keep full precision.
  std::array<double, 2> eigenvalues() const noexcept {
    const double mean = 0.5 * (xx + yy);
    const double rad = std::hypot(0.5 * (xx - yy), xy);
    const double big = mean + std::copysign(rad, mean);
    const double small = big != 0.0 ? (xx * yy - xy * xy) / big : 0.0;
    return {std::min(big, small), std::max(big, small)};
  }

  double spectral_norm() const noexcept {
    const auto ev = eigenvalues();
    return std::max(std::abs(ev[0]), std::abs(ev[1]));
  }

  friend Sym2 operator-(const Sym2& a, const Sym2& b) noexcept {
    return {a.xx - b.xx, a.xy - b.xy, a.yy - b.yy};
  }
};

/// One symmetric matrix per mesh element.
using ElementMatrixField = std::vector<Sym2>;

/// Unit vectors along the two legs a0->a1, a0->a2 of a right-angled element.
inline std::array<Vec2, 2> leg_directions(const StructuredTriMesh& mesh, std::size_t e) {
  const auto& el = mesh.element(e);
  const Vec2& a0 = mesh.node(el[0]);
  std::array<Vec2, 2> dirs;
  for (int l = 0; l < 2; ++l) {
    const Vec2& al = mesh.node(el[l + 1]);
    const double dx = al[0] - a0[0], dy = al[1] - a0[1];
    const double len = std::hypot(dx, dy);
    dirs[l] = {dx / len, dy / len};
  }
  return dirs;
}

/// Sum_l lambda_l e_l e_l^T over the two orthonormal leg directions.
inline Sym2 from_legs(const std::array<Vec2, 2>& dirs, double lambda_a, double lambda_b) {
  const Vec2& a = dirs[0];
  const Vec2& b = dirs[1];
  return {lambda_a * a[0] * a[0] + lambda_b * b[0] * b[0],
          lambda_a * a[0] * a[1] + lambda_b * b[0] * b[1],
          lambda_a * a[1] * a[1] + lambda_b * b[1] * b[1]};
}

/// True when two nodal values are far enough apart for the difference quotient.
inline bool values_differ(double u0, double ul) noexcept {
  return std::abs(ul - u0) > 1e-12 * std::max(1.0, std::abs(u0));
}

/// Leg entry of Lambda^1: (ul - u0) / (F'(ul) - F'(u0)), or 1 / F''(u0).
inline double lambda1_entry(const RegularizedPotential& pot, double u0, double ul) {
  if (!values_differ(u0, ul)) return 1.0 / pot.f_second(u0);
  return (ul - u0) / (pot.f_prime(ul) - pot.f_prime(u0));
}

/// Leg entry of Lambda^2: (p-1)(F(ul) - F(u0)) / (F'(ul) - F'(u0)), or a_eps(u0).
inline double lambda2_entry(const RegularizedPotential& pot, double u0, double ul) {
  if (!values_differ(u0, ul)) return pot.a_eps(u0);
  return (pot.p() - 1.0) * (pot.f_value(ul) - pot.f_value(u0)) /
         (pot.f_prime(ul) - pot.f_prime(u0));
}

/// Partial derivatives (d/du0, d/dul) of lambda2_entry.  Near-equal values use
/// the symmetric limit a_eps'/2, with a wider window than the entry itself
/// because the quotient derivative cancels badly.
inline std::array<double, 2> lambda2_partials(const RegularizedPotential& pot, double u0,
                                              double ul) {
  const double p = pot.p();
  if (std::abs(ul - u0) <= 1e-6 * std::max(1.0, std::abs(u0))) {
    const double mid = 0.5 * (u0 + ul);
    const bool middle = mid > pot.lower_breakpoint() && mid < pot.upper_breakpoint();
    const double half_slope = 0.5 * (middle ? 1.0 : p - 1.0);
    return {half_slope, half_slope};
  }
  const auto a = pot.evaluate(u0);
  const auto b = pot.evaluate(ul);
  const double dfp = b.first - a.first;
  const double df = b.value - a.value;
  const double inv = (p - 1.0) / (dfp * dfp);
  return {inv * (-a.first * dfp + df * a.second), inv * (b.first * dfp - df * b.second)};
}

template <class Entry>
ElementMatrixField build_leg_operator(const StructuredTriMesh& mesh, std::span<const double> u,
                                      Entry&& entry) {
  require_nodal(mesh, u, "lambda operator");
  ElementMatrixField out(mesh.num_elements());
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.element(e);
    const double u0 = u[el[0]];
    out[e] = from_legs(leg_directions(mesh, e), entry(u0, u[el[1]]), entry(u0, u[el[2]]));
  }
  return out;
}

/// Lambda^1: per element, Lambda^1 grad Pi^h F'(u) = grad u.
inline ElementMatrixField lambda1(const RegularizedPotential& pot, const StructuredTriMesh& mesh,
                                  std::span<const double> u) {
  return build_leg_operator(mesh, u, [&](double a, double b) { return lambda1_entry(pot, a, b); });
}

/// Lambda^2: per element, Lambda^2 grad Pi^h F'(u) = (p-1) grad Pi^h F(u).
inline ElementMatrixField lambda2(const RegularizedPotential& pot, const StructuredTriMesh& mesh,
                                  std::span<const double> u) {
  return build_leg_operator(mesh, u, [&](double a, double b) { return lambda2_entry(pot, a, b); });
}

using LambdaBuilder = std::function<ElementMatrixField(
    const RegularizedPotential&, const StructuredTriMesh&, std::span<const double>)>;

/// Elementwise product Lambda_K g_K.
inline ElementVectors apply_elementwise(const ElementMatrixField& lam, const ElementVectors& g) {
  ElementVectors out(g.size());
  for (std::size_t e = 0; e < g.size(); ++e) out[e] = lam[e].apply(g[e]);
  return out;
}

}  // namespace chemrep
