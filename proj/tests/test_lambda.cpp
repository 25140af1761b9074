#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "chemrep/lambda_ops.hpp"
#include "chemrep/verification.hpp"

using namespace chemrep;

namespace {

const RegularizedPotential kPot(1.5, 0.01);

void expect_identity(const Sym2& m, double diag, double tol) {
  EXPECT_NEAR(m.xx, diag, tol);
  EXPECT_NEAR(m.yy, diag, tol);
  EXPECT_NEAR(m.xy, 0.0, tol);
}

}  // namespace

TEST(Lambda, EntriesOnMidRangeLegs) {
  // F'(s) = 2 sqrt(s), F(s) = (4/3) s^1.5 + const on the middle branch
  const double fp_oracle = 2.0 * std::sqrt(4.0) - 2.0 * std::sqrt(1.0);
  EXPECT_NEAR(lambda1_entry(kPot, 1.0, 4.0), 3.0 / fp_oracle, 1e-15);
  EXPECT_NEAR(lambda1_entry(kPot, 1.0, 4.0), 1.5, 1e-15);
  const double f_oracle = 4.0 / 3.0 * (std::pow(4.0, 1.5) - 1.0);
  EXPECT_NEAR(lambda2_entry(kPot, 1.0, 4.0), 0.5 * f_oracle / fp_oracle, 1e-14);
  EXPECT_NEAR(lambda2_entry(kPot, 1.0, 4.0), 7.0 / 3.0, 1e-14);
  // symmetric in its arguments
  EXPECT_DOUBLE_EQ(lambda1_entry(kPot, 4.0, 1.0), lambda1_entry(kPot, 1.0, 4.0));
  EXPECT_DOUBLE_EQ(lambda2_entry(kPot, 4.0, 1.0), lambda2_entry(kPot, 1.0, 4.0));
}

TEST(Lambda, ConstantFieldGivesScaledIdentity) {
  const StructuredTriMesh m(3, 3, 2.0, 2.0);
  const std::vector<double> one(m.num_nodes(), 1.0);
  for (const auto& a : lambda1(kPot, m, one)) expect_identity(a, 1.0, 1e-15);
  for (const auto& a : lambda2(kPot, m, one)) expect_identity(a, 1.0, 1e-15);
  const std::vector<double> low(m.num_nodes(), 0.003);
  for (const auto& a : lambda1(kPot, m, low)) expect_identity(a, 1.0 / kPot.f_second(0.003), 1e-15);
  for (const auto& a : lambda2(kPot, m, low)) expect_identity(a, kPot.a_eps(0.003), 1e-15);
}

TEST(Lambda, NearEqualThresholdIsContinuous) {
  for (double u0 : {0.003, 0.5, 2.0, 50.0, 250.0}) {
    const double thr = 1e-12 * std::max(1.0, std::abs(u0));
    const double below = lambda1_entry(kPot, u0, u0 + 0.5 * thr);
    const double above = lambda1_entry(kPot, u0, u0 + 4.0 * thr);
    EXPECT_NEAR(above, below, 1e-3 * below);
    const double b2 = lambda2_entry(kPot, u0, u0 + 0.5 * thr);
    const double a2 = lambda2_entry(kPot, u0, u0 + 4.0 * thr);
    EXPECT_NEAR(a2, b2, 1e-3 * b2);
    // a small gap d moves the secant entries by O(d) from their limits; a_eps
    // has slope at most 1, so the Lambda^2 entry stays within d
    const double d = 1e-6 * std::max(1.0, u0);
    EXPECT_NEAR(lambda1_entry(kPot, u0, u0 + d), 1.0 / kPot.f_second(u0), 1e-5 / kPot.f_second(u0));
    EXPECT_NEAR(lambda2_entry(kPot, u0, u0 + d), kPot.a_eps(u0), d);
  }
}

TEST(Lambda, IdentitiesHoldOnRandomFields) {
  const StructuredTriMesh m(6, 6, 2.0, 2.0);
  for (const auto& [p, eps] : verify::lambda_parameter_grid()) {
    const auto st = verify::identity_residuals(m, p, eps, 10, 77);
    EXPECT_LE(st.max_rel_chain, 1e-12) << "p=" << p << " eps=" << eps;
    EXPECT_LE(st.max_rel_production, 1e-12) << "p=" << p << " eps=" << eps;
  }
}

TEST(Lambda, SpectrumWithinCurvatureBounds) {
  const StructuredTriMesh m(6, 6, 2.0, 2.0);
  for (const auto& [p, eps] : verify::lambda_parameter_grid()) {
    const auto st = verify::bound_checks(m, p, eps, 20, 88);
    EXPECT_EQ(st.spectral_violations, 0) << "p=" << p << " eps=" << eps;
    EXPECT_EQ(st.lipschitz_violations, 0) << "p=" << p << " eps=" << eps;
  }
}

TEST(Lambda, OperatorsArePositive) {
  // Lambda^1 is positive for any data since F_eps is convex; Lambda^2 only
  // where u >= 0, because F_eps decreases below -eps
  const StructuredTriMesh m(5, 4, 2.0, 2.0);
  std::mt19937_64 rng(5);
  auto u = verify::sample_field(rng, m.num_nodes(), kPot.eps());
  for (const auto& a : lambda1(kPot, m, u)) EXPECT_GT(a.eigenvalues()[0], 0.0);
  for (double& x : u) x = std::abs(x);
  for (const auto& a : lambda2(kPot, m, u)) EXPECT_GT(a.eigenvalues()[0], 0.0);
}

TEST(Lambda, LegDirectionsAreOrthonormalAxes) {
  const StructuredTriMesh m(2, 2, 2.0, 1.0);
  for (std::size_t e = 0; e < m.num_elements(); ++e) {
    const auto d = leg_directions(m, e);
    EXPECT_EQ(std::abs(d[0][0]), 1.0);
    EXPECT_EQ(d[0][1], 0.0);
    EXPECT_EQ(d[1][0], 0.0);
    EXPECT_EQ(std::abs(d[1][1]), 1.0);
  }
}

TEST(Lambda, Sym2EigenvaluesMatchDenseSolver) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const double scale = std::pow(10.0, 6.0 * u(rng));
    const Sym2 s{scale * u(rng), 1e-4 * scale * u(rng), u(rng)};
    Eigen::Matrix2d d;
    d << s.xx, s.xy, s.xy, s.yy;
    const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(d).eigenvalues();
    const auto got = s.eigenvalues();
    const double tol = 1e-14 * std::max(std::abs(ev[0]), std::abs(ev[1]));
    EXPECT_NEAR(got[0], ev[0], tol);
    EXPECT_NEAR(got[1], ev[1], tol);
  }
  // widely separated eigenvalues keep relative precision in the small one
  const Sym2 sep{1e8, 1.0, 1e-3};
  EXPECT_NEAR(sep.eigenvalues()[0], 1e-3 - 1e-8, 1e-17);
}

TEST(Lambda, Lambda2PartialsMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.05, 5.0);
  for (int t = 0; t < 50; ++t) {
    const double a = u(rng), b = u(rng);
    if (std::abs(a - b) < 1e-2) continue;
    const auto d = lambda2_partials(kPot, a, b);
    const double h = 1e-6;
    const double da = (lambda2_entry(kPot, a + h, b) - lambda2_entry(kPot, a - h, b)) / (2 * h);
    const double db = (lambda2_entry(kPot, a, b + h) - lambda2_entry(kPot, a, b - h)) / (2 * h);
    EXPECT_NEAR(d[0], da, 1e-6 * std::max(1.0, std::abs(da)));
    EXPECT_NEAR(d[1], db, 1e-6 * std::max(1.0, std::abs(db)));
  }
}

TEST(Lambda, RejectsWrongFieldSize) {
  const StructuredTriMesh m(2, 2, 1.0, 1.0);
  EXPECT_THROW(lambda1(kPot, m, std::vector<double>(4, 1.0)), std::invalid_argument);
}
