#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <span>
#include <stdexcept>
#include <vector>

#include "chemrep/sparse.hpp"

namespace chemrep {

/// Solves the small dense system a x = b in place by Gaussian elimination with
/// partial pivoting.  Returns false if a pivot vanishes.
inline bool dense_solve(std::vector<std::vector<double>>& a, std::vector<double>& b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (!(std::abs(a[piv][c]) > 0.0)) return false;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t c = n; c-- > 0;) {
    for (std::size_t k = c + 1; k < n; ++k) b[c] -= a[c][k] * b[k];
    b[c] /= a[c][c];
  }
  return true;
}

/**
 * Anderson mixing for a fixed-point map x -> G(x).
 *
 * Each call to `next(x, g)` takes the current iterate and its image and returns
 * the following iterate.  With depth 0, or on the first call, that is g itself.
 * Fixed points of the mixed iteration are exactly the fixed points of G.
 */
class AndersonMixer {
 public:
  explicit AndersonMixer(std::size_t depth) : depth_(depth) {}

  std::vector<double> next(std::span<const double> x, std::span<const double> g) {
    if (x.size() != g.size()) throw std::invalid_argument("AndersonMixer: size mismatch");
    std::vector<double> f = vec::diff(g, x);
    std::vector<double> gv(g.begin(), g.end());
    if (depth_ == 0) return gv;

    if (!last_f_.empty()) {
      d_f_.push_back(vec::diff(f, last_f_));
      d_g_.push_back(vec::diff(gv, last_g_));
      if (d_f_.size() > depth_) {
        d_f_.pop_front();
        d_g_.pop_front();
      }
    }
    last_f_ = f;
    last_g_ = gv;
    if (d_f_.empty()) return gv;

    const std::size_t m = d_f_.size();
    std::vector<std::vector<double>> gram(m, std::vector<double>(m));
    std::vector<double> rhs(m);
    double scale = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j <= i; ++j) gram[i][j] = gram[j][i] = vec::dot(d_f_[i], d_f_[j]);
      rhs[i] = vec::dot(d_f_[i], f);
      scale = std::max(scale, gram[i][i]);
    }
    for (std::size_t i = 0; i < m; ++i) gram[i][i] += 1e-12 * scale;
    if (!(scale > 0.0) || !dense_solve(gram, rhs)) {
      reset();
      return gv;
    }
    for (std::size_t j = 0; j < m; ++j) vec::axpy(-rhs[j], d_g_[j], gv);
    return gv;
  }

  void reset() {
    d_f_.clear();
    d_g_.clear();
    last_f_.clear();
    last_g_.clear();
  }

 private:
  std::size_t depth_;
  std::deque<std::vector<double>> d_f_, d_g_;
  std::vector<double> last_f_, last_g_;
};

}  // namespace chemrep
