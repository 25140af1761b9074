#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "chemrep/diagnostics.hpp"
#include "chemrep/schemes.hpp"
#include "chemrep/testing/dense_oracle.hpp"
#include "chemrep/verification.hpp"

using namespace chemrep;

namespace {

constexpr Scheme kAll[] = {Scheme::UV, Scheme::UVEPS, Scheme::USEPS, Scheme::US0};

SchemeConfig tight(Scheme s, double dt = 1e-3, double p = 1.5, double eps = 1e-2) {
  auto c = verify::tight_config(s, p, eps, dt);
  c.picard_tol = 1e-12;
  c.linear_tol = 1e-14;
  return c;
}

std::string name_of(const ::testing::TestParamInfo<Scheme>& info) {
  return std::string(to_string(info.param));
}

}  // namespace

class EachScheme : public ::testing::TestWithParam<Scheme> {};

TEST_P(EachScheme, ConstantStateFollowsScalarRecurrence) {
  const Scheme sc = GetParam();
  const StructuredTriMesh mesh(4, 4, 2.0, 2.0);
  const double p = 1.5, k = 0.1, c = 2.0, eps = 1e-2;
  const SchemeSolver solver(mesh, tight(sc, k, p, eps));
  // uses_eps schemes produce p(p-1) F_eps(c); the others c^p
  const double source = uses_eps(sc) ? p * (p - 1.0) * RegularizedPotential(p, eps).f_value(c) : std::pow(c, p);
  auto s = solver.init_state(constant_preset(c, 1.0));
  double v = 1.0;
  for (int n = 0; n < 10; ++n) {
    s = solver.step(s).first;
    v = (v + k * source) / (1.0 + k);
    for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
      EXPECT_NEAR(s.u[i], c, 1e-12);
      EXPECT_NEAR(s.v[i], v, 1e-11 * v);
    }
    for (double x : s.sigma.data()) EXPECT_NEAR(x, 0.0, 1e-12);
  }
}

TEST_P(EachScheme, InitialStateFromConstants) {
  const StructuredTriMesh mesh(3, 3, 2.0, 2.0);
  const SchemeSolver solver(mesh, tight(GetParam()));
  const auto s = solver.init_state(constant_preset(3.0, 0.5));
  for (double x : s.u) EXPECT_NEAR(x, 3.0, 1e-13);
  for (double x : s.v) EXPECT_NEAR(x, 0.5, 1e-12);
  EXPECT_EQ(s.sigma.size(), uses_sigma(GetParam()) ? 2 * mesh.num_nodes() : 0u);
  for (double x : s.sigma.data()) EXPECT_NEAR(x, 0.0, 1e-12);
}

TEST_P(EachScheme, MassIsConserved) {
  const StructuredTriMesh mesh(8, 8, 2.0, 2.0);
  auto cfg = tight(GetParam(), 1e-3);
  cfg.picard_tol = 1e-10;
  const SchemeSolver solver(mesh, cfg);
  auto s = solver.init_state(gauss_preset());
  const double m0 = mass(solver.space(), s.u.data());
  for (int n = 0; n < 10; ++n) {
    s = solver.step(s).first;
    EXPECT_NEAR(mass(solver.space(), s.u.data()), m0, 1e-11 * m0);
  }
}

TEST_P(EachScheme, OneStepMatchesDenseOracle) {
  const StructuredTriMesh mesh(2, 2, 2.0, 2.0);
  auto cfg = tight(GetParam(), 1e-3);
  cfg.picard_tol = 1e-14;
  cfg.linear_tol = 1e-15;
  const SchemeSolver solver(mesh, cfg);
  const auto prev = solver.init_state(gauss_preset());
  const auto next = solver.step(prev).first;
  const auto ref = oracle::dense_step(mesh, cfg, prev.u.data(), prev.v.data(), prev.sigma.data());
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
    EXPECT_NEAR(next.u[i], ref.u[i], 1e-9 * std::max(1.0, std::abs(ref.u[i])));
    EXPECT_NEAR(next.v[i], ref.v[i], 1e-9 * std::max(1.0, std::abs(ref.v[i])));
  }
  if (uses_sigma(GetParam()))
    for (std::size_t i = 0; i < ref.sigma.size(); ++i)
      EXPECT_NEAR(next.sigma.data()[i], ref.sigma[i], 1e-9 * std::max(1.0, std::abs(ref.sigma[i])));
}

TEST_P(EachScheme, ConvergedStepZeroesResidual) {
  const StructuredTriMesh mesh(6, 6, 2.0, 2.0);
  const SchemeSolver solver(mesh, tight(GetParam()));
  const auto prev = solver.init_state(gauss_preset());
  const auto next = solver.step(prev).first;
  const auto r = solver.residual(prev, solver.stack(next));
  const auto r0 = solver.residual(prev, solver.stack(prev));
  EXPECT_LE(vec::norm2(r), 1e-8 * vec::norm2(r0));
}

TEST_P(EachScheme, JacobianMatchesFiniteDifferences) {
  const StructuredTriMesh mesh(3, 3, 2.0, 2.0);
  const SchemeSolver solver(mesh, tight(GetParam(), 1e-2));
  const auto prev = solver.init_state(gauss_preset());
  auto x = solver.stack(solver.step(prev).first);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  // perturb so Lambda^2 legs stay clear of the near-equal window
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) x[i] += 0.05 * unit(rng);
  const auto jac = solver.jacobian(x);
  for (int t = 0; t < 4; ++t) {
    std::vector<double> d(x.size());
    for (double& v : d) v = unit(rng);
    const double h = 1e-6;
    auto xp = x, xm = x;
    vec::axpy(h, d, xp);
    vec::axpy(-h, d, xm);
    const auto rp = solver.residual(prev, xp), rm = solver.residual(prev, xm);
    const auto jd = jac * d;
    double scale = 0.0, gap = 0.0;
    for (std::size_t i = 0; i < jd.size(); ++i) {
      const double fd = (rp[i] - rm[i]) / (2 * h);
      scale = std::max(scale, std::abs(fd));
      gap = std::max(gap, std::abs(fd - jd[i]));
    }
    EXPECT_LE(gap, 1e-6 * scale) << "direction " << t;
  }
}

TEST_P(EachScheme, NewtonAgreesWithPicard) {
  const StructuredTriMesh mesh(6, 6, 2.0, 2.0);
  auto cfg = tight(GetParam(), 1e-3);
  const SchemeSolver picard(mesh, cfg);
  cfg.method = NonlinearMethod::newton;
  const SchemeSolver newton(mesh, cfg);
  const auto prev = picard.init_state(gauss_preset());
  const auto [a, ra] = picard.step(prev);
  const auto [b, rb] = newton.step(prev);
  EXPECT_FALSE(ra.used_newton);
  EXPECT_TRUE(rb.used_newton);
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
    EXPECT_NEAR(a.u[i], b.u[i], 1e-9 * std::max(1.0, std::abs(a.u[i])));
    EXPECT_NEAR(a.v[i], b.v[i], 1e-9 * std::max(1.0, std::abs(a.v[i])));
  }
}

TEST_P(EachScheme, StepsAreDeterministic) {
  const StructuredTriMesh mesh(6, 6, 2.0, 2.0);
  const SchemeSolver solver(mesh, verify::tight_config(GetParam(), 1.4, 1e-3, 1e-3));
  const auto prev = solver.init_state(cosine_preset());
  const auto a = solver.step(prev).first;
  const auto b = solver.step(prev).first;
  EXPECT_EQ(a.u.data(), b.u.data());
  EXPECT_EQ(a.v.data(), b.v.data());
  EXPECT_EQ(a.sigma.data(), b.sigma.data());
  EXPECT_EQ(a.step, 1);
  EXPECT_DOUBLE_EQ(a.time, 1e-3);
}

INSTANTIATE_TEST_SUITE_P(Schemes, EachScheme, ::testing::ValuesIn(kAll), name_of);

TEST(Schemes, UvFirstStepFromConstantData) {
  const StructuredTriMesh mesh(3, 3, 2.0, 2.0);
  const SchemeSolver solver(mesh, tight(Scheme::UV, 0.1));
  const auto s = solver.step(solver.init_state(constant_preset(2.0, 1.0))).first;
  const double oracle = (1.0 + 0.1 * std::pow(2.0, 1.5)) / 1.1;
  EXPECT_NEAR(oracle, 1.1662206, 1e-7);
  for (double v : s.v) EXPECT_NEAR(v, oracle, 1e-12);
}

TEST(Schemes, ConstantStateWithinMiddleBranchUsesPotentialSource) {
  // the source p(p-1) F_eps(c) equals c^p + p(p-1) c2 eps^p on [eps, 1/eps]
  const double p = 1.5, eps = 1e-2, c = 2.0;
  const double c2 = (p * p * p - 4 * p * p + 3 * p + 2) / (2 * p * (p - 1) * (p - 1));
  EXPECT_NEAR(p * (p - 1) * RegularizedPotential(p, eps).f_value(c), std::pow(c, p) + p * (p - 1) * c2 * std::pow(eps, p),
              1e-14);
}

TEST(Schemes, RecoveryDecaysWithoutProduction) {
  const StructuredTriMesh mesh(4, 4, 2.0, 2.0);
  const double k = 0.05;
  const SchemeSolver solver(mesh, tight(Scheme::US0, k));
  const std::vector<double> zero(mesh.num_nodes(), 0.0);
  ScalarField v(mesh.num_nodes(), 3.0);
  double expected = 3.0;
  for (int n = 0; n < 5; ++n) {
    v = solver.recover_v(zero, v);
    expected /= 1.0 + k;
    for (double x : v) EXPECT_NEAR(x, expected, 1e-12);
  }
  // identical inputs give bitwise identical solves
  EXPECT_EQ(solver.recover_v(zero, v).data(), solver.recover_v(zero, v).data());
}

TEST(Schemes, NonlinearDiffusionMatchesQuadrature) {
  const double p = 1.4;
  const StructuredTriMesh mesh(2, 2, 1.0, 1.0);
  const SchemeSolver solver(mesh, verify::tight_config(Scheme::US0, p, 1e-3, 1e-3));
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> unit(0.2, 3.0);
  std::vector<double> u(mesh.num_nodes());
  for (double& x : u) x = unit(rng);
  const auto got = solver.nonlinear_diffusion(u);
  // brute force: (1/(p-1)) int Pi(u^{2-p}) grad Pi(u^{p-1}) . grad phi_i, P1 weight by quadrature
  std::vector<double> ref(mesh.num_nodes(), 0.0);
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.element(e);
    const auto& geo = mesh.geometry(e);
    Vec2 gq{0.0, 0.0};
    for (int a = 0; a < 3; ++a)
      for (int c = 0; c < 2; ++c) gq[c] += std::pow(u[el[a]], p - 1.0) * geo.grads[a][c];
    double weight_integral = 0.0;
    for (const auto& q : degree5_rule()) {
      double w = 0.0;
      for (int a = 0; a < 3; ++a) w += q.bary[a] * std::pow(u[el[a]], 2.0 - p);
      weight_integral += q.weight * geo.area * w;
    }
    for (int i = 0; i < 3; ++i) ref[el[i]] += weight_integral * dot(gq, geo.grads[i]) / (p - 1.0);
  }
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-13);
}

TEST(Schemes, NewtonFallbackRescuesStalledPicard) {
  const StructuredTriMesh mesh(6, 6, 2.0, 2.0);
  // at 1e-13 Picard needs 15 sweeps and Newton 9; the cap of 10 is shared
  auto cfg = tight(Scheme::UVEPS, 1e-3);
  cfg.picard_tol = 1e-13;
  cfg.picard_max = 10;
  const SchemeSolver solver(mesh, cfg);
  const auto [s, report] = solver.step(solver.init_state(gauss_preset()));
  EXPECT_TRUE(report.used_newton);
  cfg.newton_fallback = false;
  const SchemeSolver strict(mesh, cfg);
  EXPECT_THROW(strict.step(strict.init_state(gauss_preset())), PicardError);
}

TEST(Schemes, ConfigurationIsValidated) {
  SchemeConfig c;
  c.dt = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.p = 2.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.eps = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.scheme = Scheme::US0;  // eps unused
  EXPECT_NO_THROW(c.validate());
  c = {};
  c.picard_max = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Schemes, NamesRoundTrip) {
  for (Scheme s : kAll) EXPECT_EQ(parse_scheme(to_string(s)), s);
  EXPECT_THROW(parse_scheme("uv"), std::invalid_argument);
  EXPECT_EQ(parse_method("newton"), NonlinearMethod::newton);
  EXPECT_THROW(parse_method("secant"), std::invalid_argument);
  EXPECT_TRUE(uses_sigma(Scheme::US0));
  EXPECT_FALSE(uses_sigma(Scheme::UVEPS));
  EXPECT_TRUE(uses_eps(Scheme::USEPS));
  EXPECT_FALSE(uses_eps(Scheme::UV));
}

TEST(Schemes, PositivePartPowers) {
  EXPECT_EQ(pos_pow(-1.0, 1.5), 0.0);
  EXPECT_EQ(pos_pow(0.0, 0.5), 0.0);
  EXPECT_NEAR(pos_pow(4.0, 1.5), 8.0, 1e-14);
  EXPECT_NEAR(pos_pow_slope(4.0, 1.5), 3.0, 1e-14);
  EXPECT_EQ(pos_pow_slope(-2.0, 1.5), 0.0);
}

TEST(Schemes, NegativeInitialDataRejected) {
  const StructuredTriMesh mesh(2, 2, 1.0, 1.0);
  const SchemeSolver solver(mesh, tight(Scheme::UV));
  EXPECT_THROW(solver.init_state(constant_preset(-1.0, 1.0)), std::invalid_argument);
  EXPECT_THROW(solver.step_us0(solver.init_state(constant_preset(1.0, 1.0))), std::logic_error);
}
