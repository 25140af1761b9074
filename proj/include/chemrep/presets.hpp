#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "chemrep/fem.hpp"

namespace chemrep {

/// Closed-form initial data (u0, v0) with the gradient of v0 for R^h.
struct InitialCondition {
  std::string name;
  ScalarFunction u0;
  ScalarFunction v0;
  GradientFunction grad_v0;
};

/// Bump centred at (1, 1) on [0,2]^2: dip in u down to 1e-4, peak in v up to 100.0001.
inline InitialCondition gauss_preset() {
  auto q = [](double t) { return t * (2.0 - t); };
  auto dq = [](double t) { return 2.0 - 2.0 * t; };
  InitialCondition ic;
  ic.name = "gauss";
  ic.u0 = [q](double x, double y) {
    const double r2 = (x - 1.0) * (x - 1.0) + (y - 1.0) * (y - 1.0);
    return -10.0 * q(x) * q(y) * std::exp(-10.0 * r2) + 10.0001;
  };
  ic.v0 = [q](double x, double y) {
    const double r2 = (x - 1.0) * (x - 1.0) + (y - 1.0) * (y - 1.0);
    return 100.0 * q(x) * q(y) * std::exp(-30.0 * r2) + 0.0001;
  };
  ic.grad_v0 = [q, dq](double x, double y) -> Vec2 {
    const double r2 = (x - 1.0) * (x - 1.0) + (y - 1.0) * (y - 1.0);
    const double e = 100.0 * std::exp(-30.0 * r2);
    return {e * q(y) * (dq(x) - 60.0 * (x - 1.0) * q(x)),
            e * q(x) * (dq(y) - 60.0 * (y - 1.0) * q(y))};
  };
  return ic;
}

inline InitialCondition cosine_preset() {
  constexpr double w = 2.0 * std::numbers::pi;
  InitialCondition ic;
  ic.name = "cosine";
  ic.u0 = [](double x, double y) { return 14.0 * std::cos(w * x) * std::cos(w * y) + 14.0001; };
  ic.v0 = [](double x, double y) { return -14.0 * std::cos(w * x) * std::cos(w * y) + 14.0001; };
  ic.grad_v0 = [](double x, double y) -> Vec2 {
    return {14.0 * w * std::sin(w * x) * std::cos(w * y),
            14.0 * w * std::cos(w * x) * std::sin(w * y)};
  };
  return ic;
}

inline InitialCondition constant_preset(double cu, double cv) {
  InitialCondition ic;
  ic.name = "constant:" + std::to_string(cu) + ":" + std::to_string(cv);
  ic.u0 = [cu](double, double) { return cu; };
  ic.v0 = [cv](double, double) { return cv; };
  ic.grad_v0 = [](double, double) -> Vec2 { return {0.0, 0.0}; };
  return ic;
}

/// Parses "gauss", "cosine" or "constant:<cu>:<cv>".
inline InitialCondition parse_preset(const std::string& spec) {
  if (spec == "gauss") return gauss_preset();
  if (spec == "cosine") return cosine_preset();
  const std::string prefix = "constant:";
  if (spec.rfind(prefix, 0) == 0) {
    const auto rest = spec.substr(prefix.size());
    const auto colon = rest.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("preset '" + spec + "': expected constant:<cu>:<cv>");
    try {
      std::size_t used_u = 0, used_v = 0;
      const std::string su = rest.substr(0, colon), sv = rest.substr(colon + 1);
      const double cu = std::stod(su, &used_u);
      const double cv = std::stod(sv, &used_v);
      if (used_u != su.size() || used_v != sv.size()) throw std::invalid_argument("trailing");
      auto ic = constant_preset(cu, cv);
      ic.name = spec;
      return ic;
    } catch (const std::logic_error&) {
      throw std::invalid_argument("preset '" + spec + "': constants must be numbers");
    }
  }
  throw std::invalid_argument("unknown initial-condition preset '" + spec +
                              "' (expected gauss, cosine or constant:<cu>:<cv>)");
}

}  // namespace chemrep
