#include <gtest/gtest.h>

#include <set>
#include <string>

#include "chemrep/verification.hpp"

using namespace chemrep;

TEST(Verification, FastSuitePasses) {
  const auto results = verify::run_suite(verify::Level::fast);
  std::set<int> ids;
  for (const auto& [id, r] : results) {
    ids.insert(id);
    EXPECT_TRUE(r.passed) << "criterion " << id << " (" << r.name << "): " << r.detail;
  }
  EXPECT_EQ(ids, (std::set<int>{1, 2, 3, 4, 5, 9, 10}));
}

TEST(Verification, OnlyRestrictsTheSuite) {
  const auto results = verify::run_suite(verify::Level::fast, {}, {3});
  ASSERT_EQ(results.size(), 1u);
  EXPECT_EQ(results[0].first, 3);
}

TEST(Verification, SignFlippedLambda2IsDetected) {
  const LambdaBuilder flipped = [](const RegularizedPotential& pot, const StructuredTriMesh& mesh,
                                   std::span<const double> u) {
    auto lam = lambda2(pot, mesh, u);
    for (auto& m : lam) m = {-m.xx, -m.xy, -m.yy};
    return lam;
  };
  EXPECT_TRUE(verify::check_element_identities(4, 5).passed);
  const auto r = verify::check_element_identities(4, 5, &lambda1, flipped);
  EXPECT_FALSE(r.passed) << r.detail;
}

TEST(Verification, WrongLambda1IsDetected) {
  const LambdaBuilder scaled = [](const RegularizedPotential& pot, const StructuredTriMesh& mesh,
                                  std::span<const double> u) {
    auto lam = lambda1(pot, mesh, u);
    for (auto& m : lam) m = {1.001 * m.xx, 1.001 * m.xy, 1.001 * m.yy};
    return lam;
  };
  EXPECT_FALSE(verify::check_element_identities(4, 5, scaled).passed);
}

TEST(Verification, FailuresInsideChecksAreCaught) {
  const auto r = verify::timed("throws", []() -> verify::CheckResult { throw std::runtime_error("boom"); });
  EXPECT_FALSE(r.passed);
  EXPECT_NE(r.detail.find("boom"), std::string::npos);
}
