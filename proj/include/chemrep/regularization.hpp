#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace chemrep {

/// Which closed-form piece of the regularized potential applies at a point.
enum class Branch { low, middle, high };

/// Value and first two derivatives of a single branch, evaluated at one point.
struct BranchValues {
  double value;
  double first;
  double second;
};

/**
 * C^2 convex regularization of s^p / (p (p-1)) with quadratic tails.
 *
 * The second derivative is eps^(p-2) below eps, s^(p-2) on [eps, 1/eps] and
 * eps^(2-p) above 1/eps.  Integration constants are pinned by
 * F'(1) = 1/(p-1) and the closed-form low branch anchored at s = 0; the
 * high-branch constants come from C^1 / C^0 matching at 1/eps and are
 * computed once here.
 *
 * Immutable after construction.
 */
class RegularizedPotential {
 public:
  RegularizedPotential(double p, double eps) : p_(p), eps_(eps) {
    if (!(p > 1.0 && p < 2.0)) {
      throw std::invalid_argument("RegularizedPotential: p must lie in (1, 2), got " +
                                  std::to_string(p));
    }
    if (!(eps > 0.0 && eps < 1.0)) {
      throw std::invalid_argument("RegularizedPotential: eps must lie in (0, 1), got " +
                                  std::to_string(eps));
    }
    inv_eps_ = 1.0 / eps_;
    curv_low_ = std::pow(eps_, p_ - 2.0);
    curv_high_ = std::pow(eps_, 2.0 - p_);

    const double ratio = (2.0 - p_) / (p_ - 1.0);
    slope_low_ = ratio * std::pow(eps_, p_ - 1.0);
    offset_low_ = ratio * ratio * std::pow(eps_, p_);
    offset_mid_ = (p_ * p_ * p_ - 4.0 * p_ * p_ + 3.0 * p_ + 2.0) /
                  (2.0 * p_ * (p_ - 1.0) * (p_ - 1.0)) * std::pow(eps_, p_);

    const BranchValues at_top = middle(inv_eps_);
    slope_high_ = at_top.first - curv_high_ * inv_eps_;
    offset_high_ = at_top.value - 0.5 * curv_high_ * inv_eps_ * inv_eps_ - slope_high_ * inv_eps_;
  }

  double p() const noexcept { return p_; }
  double eps() const noexcept { return eps_; }
  double lower_breakpoint() const noexcept { return eps_; }
  double upper_breakpoint() const noexcept { return inv_eps_; }

  Branch branch_of(double s) const noexcept {
    if (s <= eps_) return Branch::low;
    if (s >= inv_eps_) return Branch::high;
    return Branch::middle;
  }

  /// Evaluates one branch's closed form regardless of where s lies.
  BranchValues branch_values(Branch b, double s) const {
    switch (b) {
      case Branch::low:
        return {0.5 * curv_low_ * s * s + slope_low_ * s + offset_low_, curv_low_ * s + slope_low_,
                curv_low_};
      case Branch::high:
        return {0.5 * curv_high_ * s * s + slope_high_ * s + offset_high_,
                curv_high_ * s + slope_high_, curv_high_};
      case Branch::middle:
        if (!(s > 0.0)) throw std::domain_error("middle branch needs s > 0");
        return middle(s);
    }
    return {};
  }

  BranchValues evaluate(double s) const { return branch_values(branch_of(s), s); }

  double f_value(double s) const { return evaluate(s).value; }
  double f_prime(double s) const { return evaluate(s).first; }

  double f_second(double s) const noexcept {
    if (s <= eps_) return curv_low_;
    if (s >= inv_eps_) return curv_high_;
    return std::pow(s, p_ - 2.0);
  }

  /// Mobility (p-1) F'(s) / F''(s), in closed form.
  double a_eps(double s) const noexcept {
    if (s <= eps_) return (p_ - 1.0) * s + (2.0 - p_) * eps_;
    if (s >= inv_eps_) return (p_ - 1.0) * s + (2.0 - p_) * inv_eps_;
    return s;
  }

 private:
  BranchValues middle(double s) const {
    const double log_s = std::log(s);
    const double s_pm2 = std::exp((p_ - 2.0) * log_s);
    const double s_pm1 = s_pm2 * s;
    const double s_p = s_pm1 * s;
    return {s_p / (p_ * (p_ - 1.0)) + offset_mid_, s_pm1 / (p_ - 1.0), s_pm2};
  }

  double p_;
  double eps_;
  double inv_eps_ = 0.0;
  double curv_low_ = 0.0;
  double curv_high_ = 0.0;
  double slope_low_ = 0.0;
  double offset_low_ = 0.0;
  double offset_mid_ = 0.0;
  double slope_high_ = 0.0;
  double offset_high_ = 0.0;
};

}  // namespace chemrep
