#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "chemrep/diagnostics.hpp"
#include "chemrep/presets.hpp"
#include "chemrep/verification.hpp"

using namespace chemrep;

namespace {

const StructuredTriMesh& square() {
  static const StructuredTriMesh m(8, 8, 2.0, 2.0);
  return m;
}

std::vector<double> random_field(std::size_t n, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> x(n);
  for (double& v : x) v = u(rng);
  return x;
}

SchemeState constant_state(const SchemeSolver& solver, double cu, double cv) {
  return solver.init_state(constant_preset(cu, cv));
}

}  // namespace

TEST(Diagnostics, MassExamples) {
  const FemSpace sp(square());
  const auto n = square().num_nodes();
  EXPECT_NEAR(mass(sp, std::vector<double>(n, 1.0)), 4.0, 1e-13);
  std::vector<double> hat(n, 0.0);
  hat[10] = 1.0;
  EXPECT_DOUBLE_EQ(mass(sp, hat), lumped_weights(square())[10]);
  const auto a = random_field(n, 1, -1, 1), b = random_field(n, 2, -1, 1);
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = 2.0 * a[i] - 3.0 * b[i];
  EXPECT_NEAR(mass(sp, c), 2.0 * mass(sp, a) - 3.0 * mass(sp, b), 1e-13);
}

TEST(Diagnostics, ModifiedEnergyOfConstantUvepsState) {
  const double p = 1.5, eps = 0.01;
  const SchemeSolver solver(square(), verify::tight_config(Scheme::UVEPS, p, eps, 1e-3));
  const auto s = constant_state(solver, 1.0, 0.7);
  const double oracle = p * RegularizedPotential(p, eps).f_value(1.0) * 4.0;
  EXPECT_NEAR(oracle, 8.007, 1e-3);
  EXPECT_NEAR(energy_modified(solver, s), oracle, 1e-10);
}

TEST(Diagnostics, ModifiedEnergyOfZeroUs0State) {
  const SchemeSolver solver(square(), verify::tight_config(Scheme::US0, 1.5, 1e-3, 1e-3));
  SchemeState s;
  s.u = ScalarField(square().num_nodes(), 0.0);
  s.v = ScalarField(square().num_nodes(), 0.0);
  s.sigma = VectorField(square().num_nodes());
  EXPECT_EQ(energy_modified(solver, s), 0.0);
}

TEST(Diagnostics, ModifiedEnergyIsSumOfItsTerms) {
  const double p = 1.4;
  const auto n = square().num_nodes();
  const auto u = random_field(n, 3, 0.0, 5.0);
  const FemSpace sp(square());
  for (Scheme sc : {Scheme::UVEPS, Scheme::USEPS, Scheme::US0}) {
    const SchemeSolver solver(square(), verify::tight_config(sc, p, 1e-3, 1e-3));
    SchemeState s;
    s.u = ScalarField(u);
    s.v = ScalarField(random_field(n, 4, 0.0, 1.0));
    s.sigma = VectorField(random_field(2 * n, 5, -1.0, 1.0));
    double first = 0.0;
    if (uses_eps(sc)) {
      const RegularizedPotential pot(p, 1e-3);
      for (std::size_t i = 0; i < n; ++i) first += sp.weights[i] * p * pot.f_value(u[i]);
    } else {
      for (std::size_t i = 0; i < n; ++i) first += sp.weights[i] * std::pow(u[i], p) / (p - 1.0);
    }
    const double second = sc == Scheme::UVEPS ? 0.5 * sp.stiff.bilinear(s.v, s.v)
                                              : 0.5 * sp.vmass.bilinear(s.sigma, s.sigma);
    EXPECT_NEAR(energy_modified(solver, s), first + second, 1e-12 * (first + second));
  }
}

TEST(Diagnostics, ExactEnergyExamples) {
  const FemSpace sp(square());
  const auto n = square().num_nodes();
  const double p = 1.5;
  const std::vector<double> two(n, 2.0), c(n, 0.3);
  const double oracle = std::pow(2.0, 1.5) / 0.5 * 4.0;
  EXPECT_NEAR(oracle, 22.627, 1e-3);
  EXPECT_NEAR(energy_exact(sp, p, two, c), oracle, 1e-11);

  const auto vx = interp(square(), [](double x, double) { return x; });
  const std::vector<double> neg = random_field(n, 6, -3.0, 0.0);
  EXPECT_NEAR(energy_exact(sp, p, neg, vx.data()), 0.5 * 4.0, 1e-12);
}

TEST(Diagnostics, ResidualVanishesForSteadyConstantState) {
  const FemSpace sp(square());
  const auto n = square().num_nodes();
  const std::vector<double> u(n, 0.0), v(n, 1.7);
  const auto r = residual_RE(sp, 1.5, 1e-2, u, v, u, v);
  EXPECT_EQ(r.dt_energy, 0.0);
  EXPECT_EQ(r.u_dissipation, 0.0);
  // stiffness times a constant vanishes up to rounding
  EXPECT_NEAR(r.laplacian, 0.0, 1e-12);
  EXPECT_NEAR(r.grad_v, 0.0, 1e-12);
  EXPECT_NEAR(r.total(), 0.0, 1e-12);
}

TEST(Diagnostics, ResidualDecomposesIntoIndependentTerms) {
  const FemSpace sp(square());
  const auto& m = square();
  const auto n = m.num_nodes();
  const double p = 1.5, dt = 1e-3;
  const auto u0 = random_field(n, 7, 0.0, 3.0), v0 = random_field(n, 8, 0.0, 2.0);
  const auto u1 = random_field(n, 9, -0.5, 3.0), v1 = random_field(n, 10, 0.0, 2.0);
  const auto r = residual_RE(sp, p, dt, u0, v0, u1, v1);

  // independent assembly of each term
  auto ee = [&](const std::vector<double>& u, const std::vector<double>& v) {
    double a = 0.0;
    for (std::size_t i = 0; i < n; ++i) a += sp.weights[i] * std::pow(std::max(u[i], 0.0), p) / (p - 1.0);
    return a + 0.5 * element_vectors_sq(m, grad_p1(m, v));
  };
  const double dte = (ee(u1, v1) - ee(u0, v0)) / dt;
  std::vector<double> half(n);
  for (std::size_t i = 0; i < n; ++i) half[i] = std::pow(std::max(u1[i], 0.0), 0.5 * p);
  const double diss = 4.0 / p * element_vectors_sq(m, grad_p1(m, half));
  const auto sv = stiffness(m) * v1;
  double lap = 0.0;
  for (std::size_t i = 0; i < n; ++i) lap += sv[i] * sv[i] / sp.weights[i];
  const double gv = element_vectors_sq(m, grad_p1(m, v1));

  EXPECT_NEAR(r.dt_energy, dte, 1e-12 * std::abs(dte));
  EXPECT_NEAR(r.u_dissipation, diss, 1e-12 * diss);
  EXPECT_NEAR(r.laplacian, lap, 1e-12 * lap);
  EXPECT_NEAR(r.grad_v, gv, 1e-12 * gv);
  EXPECT_NEAR(r.total(), dte + diss + lap + gv, 1e-12 * (std::abs(dte) + diss + lap + gv));
}

TEST(Diagnostics, ConsistentLaplacianVariantUsesMassInverse) {
  const FemSpace sp(square());
  const auto v = random_field(square().num_nodes(), 11, -1.0, 1.0);
  const auto sv = sp.stiff * v;
  const auto w = solve_spd(sp.mass, sv, {1e-14, 0}).x;
  EXPECT_NEAR(discrete_laplacian_sq(sp, v, LaplacianVariant::consistent, {1e-14, 0}), vec::dot(sv, w),
              1e-10 * vec::dot(sv, w));
}

TEST(Diagnostics, GaussMinimumAtCentre) {
  const auto ic = gauss_preset();
  const StructuredTriMesh m(40, 40, 2.0, 2.0);
  const auto u = interp(m, ic.u0);
  EXPECT_NEAR(min_nodal(u.data()), 1e-4, 1e-12);
  EXPECT_NEAR(u[m.node_index(20, 20)], 1e-4, 1e-12);
  EXPECT_EQ(min_nodal(std::vector<double>{3.0, 1.0, 2.0}), 1.0);
  EXPECT_GT(min_nodal(std::vector<double>{0.5, 0.25}), 0.0);
  EXPECT_THROW(min_nodal(std::vector<double>{}), std::invalid_argument);
}

TEST(Diagnostics, NegativePartNorm) {
  const FemSpace sp(square());
  const auto n = square().num_nodes();
  EXPECT_EQ(negative_part_norm(sp, std::vector<double>(n, 1.0)), 0.0);
  EXPECT_NEAR(negative_part_norm(sp, std::vector<double>(n, -2.0)), 4.0, 1e-12);
}

TEST(Diagnostics, EnergyLawHoldsForEachScheme) {
  for (Scheme sc : {Scheme::UVEPS, Scheme::USEPS, Scheme::US0}) {
    const SchemeSolver solver(square(), verify::tight_config(sc, 1.5, 1e-3, 1e-3));
    auto s = solver.init_state(gauss_preset());
    for (int n = 0; n < 5; ++n) {
      const auto next = solver.step(s).first;
      const auto law = energy_law(solver, s, next);
      EXPECT_LE(law.lhs, 1e-8 * std::abs(law.energy_prev)) << to_string(sc);
      EXPECT_LE(std::abs(law.identity), 1e-6 * std::abs(law.energy_prev)) << to_string(sc);
      EXPECT_NEAR(mean_v_balance(solver, s, next), 0.0, 1e-7 * std::abs(law.energy_prev)) << to_string(sc);
      s = next;
    }
  }
  const SchemeSolver uv(square(), verify::tight_config(Scheme::UV, 1.5, 1e-3, 1e-3));
  const auto s = uv.init_state(gauss_preset());
  EXPECT_THROW(energy_law(uv, s, s), std::invalid_argument);
}

TEST(Diagnostics, RecordCollectsStepData) {
  const SchemeSolver solver(square(), verify::tight_config(Scheme::UVEPS, 1.5, 1e-3, 1e-3));
  const auto s0 = solver.init_state(gauss_preset());
  const auto [s1, rep] = solver.step(s0);
  const auto r0 = make_record(solver, s0, nullptr, nullptr);
  EXPECT_FALSE(r0.residual_RE.has_value());
  const auto r1 = make_record(solver, s1, &s0, &rep);
  ASSERT_TRUE(r1.residual_RE.has_value());
  EXPECT_EQ(r1.step, 1);
  EXPECT_EQ(r1.picard_iters, rep.iterations);
  EXPECT_NEAR(r1.mass, r0.mass, 1e-10 * r0.mass);
  EXPECT_EQ(r1.min_u, min_nodal(s1.u.data()));
  EXPECT_DOUBLE_EQ(*r1.residual_RE, residual_RE(solver.space(), 1.5, 1e-3, s0.u.data(), s0.v.data(),
                                                s1.u.data(), s1.v.data())
                                        .total());
}
