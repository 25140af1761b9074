#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "chemrep/fem.hpp"
#include "chemrep/linsolve.hpp"

using namespace chemrep;

namespace {

SparseOperator from_dense(const std::vector<std::vector<double>>& d) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d.size(); ++j)
      if (d[i][j] != 0.0) t.push_back({int(i), int(j), d[i][j]});
  return SparseOperator(d.size(), std::move(t));
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = u(rng);
  return x;
}

}  // namespace

TEST(Linsolve, IdentityReturnsRhs) {
  const auto id = SparseOperator::identity(5);
  const std::vector<double> b{1, -2, 3, 0.5, 7};
  EXPECT_EQ(solve_spd(id, b).x, b);
  const auto g = solve_general(id, b);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(g.x[i], b[i], 1e-15);
}

TEST(Linsolve, SpdTwoByTwo) {
  const auto a = from_dense({{4, 1}, {1, 3}});
  const auto r = solve_spd(a, std::vector<double>{1, 2});
  EXPECT_NEAR(r.x[0], 1.0 / 11, 1e-14);
  EXPECT_NEAR(r.x[1], 7.0 / 11, 1e-14);
  EXPECT_LE(r.iterations, 2u);
}

TEST(Linsolve, GeneralUpperTriangular) {
  const auto a = from_dense({{2, 1}, {0, 2}});
  const auto r = solve_general(a, std::vector<double>{3, 2});
  EXPECT_NEAR(r.x[0], 1.0, 1e-14);
  EXPECT_NEAR(r.x[1], 1.0, 1e-14);
  const auto d = solve_direct(a, std::vector<double>{3, 2});
  EXPECT_NEAR(d.x[0], 1.0, 1e-15);
  EXPECT_NEAR(d.x[1], 1.0, 1e-15);
}

TEST(Linsolve, RecoversKnownSolution) {
  const StructuredTriMesh m(10, 10, 2.0, 2.0);
  const auto a = op_Ah(m);
  const auto x0 = random_vec(a.size(), 1);
  const auto b = a * x0;
  const auto r = solve_spd(a, b, {1e-13, 0});
  for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(r.x[i], x0[i], 1e-9);
  const auto g = solve_general(a, b, {1e-13, 0});
  for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(g.x[i], x0[i], 1e-9);
}

TEST(Linsolve, ReportedResidualIsRecomputed) {
  const StructuredTriMesh m(8, 8, 2.0, 2.0);
  const auto a = op_Ah(m);
  const auto b = random_vec(a.size(), 2);
  for (const auto& r : {solve_spd(a, b), solve_general(a, b), solve_direct(a, b)}) {
    auto res = a * r.x;
    for (std::size_t i = 0; i < res.size(); ++i) res[i] = b[i] - res[i];
    EXPECT_DOUBLE_EQ(r.residual_norm, vec::norm2(res));
    EXPECT_DOUBLE_EQ(r.rhs_norm, vec::norm2(b));
    EXPECT_LE(r.residual_norm, 1e-12 * r.rhs_norm);
  }
}

TEST(Linsolve, AgreesWithDenseOracleOnNonsymmetricSystem) {
  const StructuredTriMesh m(6, 6, 2.0, 2.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  ElementVectors w(m.num_elements());
  for (auto& g : w) g = {u(rng), u(rng)};
  const auto a = combine(1.0, combine(100.0, lumped_mass(m), 1.0, stiffness(m)), 1.0, convection_u(m, w));
  const auto b = random_vec(a.size(), 4);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(a.size(), a.size());
  for (const auto& t : a.triplets()) d(t.row, t.col) += t.value;
  const Eigen::VectorXd x = d.partialPivLu().solve(Eigen::Map<const Eigen::VectorXd>(b.data(), b.size()));
  const auto r = solve_general(a, b, {1e-13, 0});
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(r.x[i], x[i], 1e-10 * x.cwiseAbs().maxCoeff());
}

TEST(Linsolve, ConsistentWithSpdSolverOnSpdInput) {
  const StructuredTriMesh m(7, 5, 2.0, 1.0);
  const auto a = op_Ah(m);
  const auto b = random_vec(a.size(), 5);
  const auto s = solve_spd(a, b, {1e-13, 0});
  const auto g = solve_general(a, b, {1e-13, 0});
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(s.x[i], g.x[i], 1e-10);
}

TEST(Linsolve, DeterministicAcrossCalls) {
  const StructuredTriMesh m(9, 9, 2.0, 2.0);
  const auto a = op_Ah(m);
  const auto b = random_vec(a.size(), 6);
  EXPECT_EQ(solve_spd(a, b).x, solve_spd(a, b).x);
  EXPECT_EQ(solve_general(a, b).x, solve_general(a, b).x);
}

TEST(Linsolve, ZeroRhsGivesZero) {
  const auto a = from_dense({{4, 1}, {1, 3}});
  const auto r = solve_spd(a, std::vector<double>{0, 0}, {}, std::vector<double>{5, 5});
  EXPECT_EQ(r.x, (std::vector<double>{0, 0}));
}

TEST(Linsolve, ErrorsAreReported) {
  const auto a = from_dense({{4, 1}, {1, 3}});
  EXPECT_THROW(solve_spd(a, std::vector<double>{1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(solve_spd(a, std::vector<double>{1, 2}, {0.0, 0}), std::invalid_argument);
  EXPECT_THROW(solve_spd(from_dense({{-1, 0}, {0, -1}}), std::vector<double>{1, 1}), SolverError);
  EXPECT_THROW(solve_spd(a, std::vector<double>{NAN, 1}), SolverError);
  EXPECT_THROW(solve_direct(from_dense({{1, 1}, {1, 1}}), std::vector<double>{1, 2}), SolverError);
}
