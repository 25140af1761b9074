#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "chemrep/sparse.hpp"

namespace chemrep {

struct SolverConfig {
  double rel_tol = 1e-12;
  std::size_t max_iter = 0;  // 0 selects 10 * dimension
  bool direct_fallback = true;  // sparse LU when BiCGStab fails

  void validate() const {
    if (!(rel_tol > 0.0)) throw std::invalid_argument("SolverConfig: rel_tol must be > 0");
  }
  std::size_t iteration_cap(std::size_t n) const { return max_iter > 0 ? max_iter : 10 * n + 10; }
};

struct SolveResult {
  std::vector<double> x;
  std::size_t iterations = 0;
  double residual_norm = 0.0;  // recomputed ||b - A x||
  double rhs_norm = 0.0;
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual, std::size_t iterations)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + " after " +
                           std::to_string(iterations) + " iterations)"),
        residual_(residual),
        iterations_(iterations) {}
  double residual() const noexcept { return residual_; }
  std::size_t iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  std::size_t iterations_;
};

namespace detail {

inline std::vector<double> jacobi_inverse(const SparseOperator& a) {
  auto d = a.diagonal_entries();
  for (double& v : d) v = (v != 0.0) ? 1.0 / v : 1.0;
  return d;
}

inline std::vector<double> residual(const SparseOperator& a, std::span<const double> x,
                                    std::span<const double> b) {
  auto r = a * x;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  return r;
}

inline void check_dims(const SparseOperator& a, std::span<const double> b,
                       const std::optional<std::vector<double>>& x0) {
  if (b.size() != a.size()) throw std::invalid_argument("solver: rhs dimension mismatch");
  if (x0 && x0->size() != a.size())
    throw std::invalid_argument("solver: initial guess dimension mismatch");
}

}  // namespace detail

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite A.
/// Stops on the true residual ||b - A x|| <= rel_tol * ||b||.
inline SolveResult solve_spd(const SparseOperator& a, std::span<const double> b,
                             const SolverConfig& cfg = {},
                             std::optional<std::vector<double>> x0 = std::nullopt) {
  cfg.validate();
  detail::check_dims(a, b, x0);
  const std::size_t n = a.size();
  SolveResult res;
  res.rhs_norm = vec::norm2(b);
  res.x = x0 ? std::move(*x0) : std::vector<double>(n, 0.0);
  if (!std::isfinite(res.rhs_norm)) throw SolverError("solver: non-finite right-hand side", res.rhs_norm, 0);
  if (res.rhs_norm == 0.0) {
    res.x.assign(n, 0.0);
    return res;
  }
  const double target = cfg.rel_tol * res.rhs_norm;
  const auto inv_diag = detail::jacobi_inverse(a);
  const std::size_t cap = cfg.iteration_cap(n);

  std::vector<double> r = detail::residual(a, res.x, b);
  double rnorm = vec::norm2(r);
  std::vector<double> z(n), p(n), ap(n);
  // Outer loop restarts from the true residual if the recursive one drifted.
  while (rnorm > target) {
    if (res.iterations >= cap) throw SolverError("solve_spd: no convergence", rnorm, res.iterations);
    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    p = z;
    double rz = vec::dot(r, z);
    while (res.iterations < cap) {
      ++res.iterations;
      a.apply(p, ap);
      const double pap = vec::dot(p, ap);
      if (!(pap > 0.0)) {
        throw SolverError("solve_spd: operator not positive definite", vec::norm2(r),
                          res.iterations);
      }
      const double alpha = rz / pap;
      vec::axpy(alpha, p, res.x);
      vec::axpy(-alpha, ap, r);
      if (vec::norm2(r) <= target) break;
      for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
      const double rz_new = vec::dot(r, z);
      const double beta = rz_new / rz;
      rz = rz_new;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    r = detail::residual(a, res.x, b);
    rnorm = vec::norm2(r);
    if (!std::isfinite(rnorm)) throw SolverError("solve_spd: non-finite residual", rnorm, res.iterations);
  }
  res.residual_norm = rnorm;
  return res;
}

/// Sparse LU factorization.  `iterations` is reported as 0.
inline SolveResult solve_direct(const SparseOperator& a, std::span<const double> b) {
  const auto n = static_cast<Eigen::Index>(a.size());
  if (b.size() != a.size()) throw std::invalid_argument("solve_direct: rhs dimension mismatch");
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(a.nonzeros());
  for (const auto& tr : a.triplets()) t.emplace_back(tr.row, tr.col, tr.value);
  Eigen::SparseMatrix<double> m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success) throw SolverError("solve_direct: singular matrix", vec::norm2(b), 0);
  const Eigen::Map<const Eigen::VectorXd> rhs(b.data(), n);
  const Eigen::VectorXd x = lu.solve(rhs);
  SolveResult res;
  res.x.assign(x.data(), x.data() + n);
  res.rhs_norm = vec::norm2(b);
  res.residual_norm = vec::norm2(detail::residual(a, res.x, b));
  if (!std::isfinite(res.residual_norm))
    throw SolverError("solve_direct: non-finite solution", res.residual_norm, 0);
  return res;
}

/// Jacobi right-preconditioned BiCGStab for general nonsingular A.  On
/// breakdown the iteration restarts once from the current iterate.
inline SolveResult solve_bicgstab(const SparseOperator& a, std::span<const double> b,
                                 const SolverConfig& cfg = {},
                                 std::optional<std::vector<double>> x0 = std::nullopt) {
  cfg.validate();
  detail::check_dims(a, b, x0);
  const std::size_t n = a.size();
  SolveResult res;
  res.rhs_norm = vec::norm2(b);
  res.x = x0 ? std::move(*x0) : std::vector<double>(n, 0.0);
  if (!std::isfinite(res.rhs_norm)) throw SolverError("solver: non-finite right-hand side", res.rhs_norm, 0);
  if (res.rhs_norm == 0.0) {
    res.x.assign(n, 0.0);
    return res;
  }
  const double target = cfg.rel_tol * res.rhs_norm;
  const auto inv_diag = detail::jacobi_inverse(a);
  const std::size_t cap = cfg.iteration_cap(n);
  constexpr double tiny = std::numeric_limits<double>::min() * 1e10;

  std::vector<double> r = detail::residual(a, res.x, b);
  double rnorm = vec::norm2(r);
  int restarts_left = 1;
  std::vector<double> r_hat, p(n), v(n), p_hat(n), s(n), s_hat(n), t(n);

  while (rnorm > target) {
    if (res.iterations >= cap)
      throw SolverError("solve_bicgstab: no convergence", rnorm, res.iterations);
    r_hat = r;
    double rho = 1.0, alpha = 1.0, omega = 1.0;
    std::fill(p.begin(), p.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
    bool breakdown = false;
    while (res.iterations < cap) {
      ++res.iterations;
      const double rho_new = vec::dot(r_hat, r);
      if (std::abs(rho_new) < tiny || std::abs(omega) < tiny) {
        breakdown = true;
        break;
      }
      const double beta = (rho_new / rho) * (alpha / omega);
      rho = rho_new;
      for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
      for (std::size_t i = 0; i < n; ++i) p_hat[i] = inv_diag[i] * p[i];
      a.apply(p_hat, v);
      const double rv = vec::dot(r_hat, v);
      if (std::abs(rv) < tiny) {
        breakdown = true;
        break;
      }
      alpha = rho / rv;
      for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
      if (vec::norm2(s) <= target) {
        vec::axpy(alpha, p_hat, res.x);
        r = s;
        break;
      }
      for (std::size_t i = 0; i < n; ++i) s_hat[i] = inv_diag[i] * s[i];
      a.apply(s_hat, t);
      const double tt = vec::dot(t, t);
      omega = tt > 0.0 ? vec::dot(t, s) / tt : 0.0;
      vec::axpy(alpha, p_hat, res.x);
      vec::axpy(omega, s_hat, res.x);
      for (std::size_t i = 0; i < n; ++i) r[i] = s[i] - omega * t[i];
      if (vec::norm2(r) <= target) break;
    }
    r = detail::residual(a, res.x, b);
    rnorm = vec::norm2(r);
    if (!std::isfinite(rnorm))
      throw SolverError("solve_bicgstab: non-finite residual", rnorm, res.iterations);
    if (breakdown && rnorm > target) {
      if (restarts_left-- == 0)
        throw SolverError("solve_bicgstab: breakdown after restart", rnorm, res.iterations);
    }
  }
  res.residual_norm = rnorm;
  return res;
}

/// BiCGStab, falling back to sparse LU when enabled and the iteration fails.
inline SolveResult solve_general(const SparseOperator& a, std::span<const double> b,
                                 const SolverConfig& cfg = {},
                                 std::optional<std::vector<double>> x0 = std::nullopt) {
  try {
    return solve_bicgstab(a, b, cfg, std::move(x0));
  } catch (const SolverError& err) {
    if (!cfg.direct_fallback) throw;
    auto res = solve_direct(a, b);
    res.iterations = err.iterations();
    return res;
  }
}

}  // namespace chemrep
