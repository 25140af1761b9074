#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace chemrep {

// Small dense-vector helpers shared by the solvers and diagnostics.
namespace vec {

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("vec::dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("vec::axpy: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline std::vector<double> scaled(double alpha, std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v *= alpha;
  return out;
}

inline std::vector<double> diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("vec::diff: size mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

}  // namespace vec

struct Triplet {
  int row;
  int col;
  double value;
};

/// Square matrix in compressed sparse row form.  Duplicate triplets are summed
/// during construction; column indices within a row are sorted.
class SparseOperator {
 public:
  SparseOperator() = default;

  SparseOperator(std::size_t n, std::vector<Triplet> triplets) : n_(n) {
    for (const auto& t : triplets) {
      if (t.row < 0 || t.col < 0 || static_cast<std::size_t>(t.row) >= n ||
          static_cast<std::size_t>(t.col) >= n) {
        throw std::out_of_range("SparseOperator: triplet index out of range");
      }
    }
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    row_ptr_.assign(n + 1, 0);
    for (std::size_t k = 0; k < triplets.size(); ++k) {
      const auto& t = triplets[k];
      if (!cols_.empty() && k > 0 && triplets[k - 1].row == t.row && triplets[k - 1].col == t.col) {
        vals_.back() += t.value;
        continue;
      }
      cols_.push_back(t.col);
      vals_.push_back(t.value);
      ++row_ptr_[t.row + 1];
    }
    for (std::size_t i = 0; i < n; ++i) row_ptr_[i + 1] += row_ptr_[i];
  }

  static SparseOperator diagonal(std::span<const double> d) {
    std::vector<Triplet> t;
    t.reserve(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) t.push_back({int(i), int(i), d[i]});
    return SparseOperator(d.size(), std::move(t));
  }

  static SparseOperator identity(std::size_t n) { return diagonal(std::vector<double>(n, 1.0)); }

  std::size_t size() const noexcept { return n_; }
  std::size_t nonzeros() const noexcept { return vals_.size(); }

  std::span<const std::size_t> row_ptr() const noexcept { return row_ptr_; }
  std::span<const int> cols() const noexcept { return cols_; }
  std::span<const double> values() const noexcept { return vals_; }

  double at(std::size_t i, std::size_t j) const {
    if (i >= n_ || j >= n_) throw std::out_of_range("SparseOperator::at");
    const auto first = cols_.begin() + row_ptr_[i];
    const auto last = cols_.begin() + row_ptr_[i + 1];
    const auto it = std::lower_bound(first, last, int(j));
    return (it != last && *it == int(j)) ? vals_[it - cols_.begin()] : 0.0;
  }

  void apply(std::span<const double> x, std::span<double> y) const {
    if (x.size() != n_ || y.size() != n_) {
      throw std::invalid_argument("SparseOperator::apply: dimension mismatch (" +
                                  std::to_string(x.size()) + " vs " + std::to_string(n_) + ")");
    }
    for (std::size_t i = 0; i < n_; ++i) {
      double s = 0.0;
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += vals_[k] * x[cols_[k]];
      y[i] = s;
    }
  }

  std::vector<double> operator*(std::span<const double> x) const {
    std::vector<double> y(n_);
    apply(x, y);
    return y;
  }

  std::vector<double> diagonal_entries() const {
    std::vector<double> d(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) d[i] = at(i, i);
    return d;
  }

  std::vector<double> row_sums() const {
    std::vector<double> s(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s[i] += vals_[k];
    return s;
  }

  /// x^T A y
  double bilinear(std::span<const double> x, std::span<const double> y) const {
    return vec::dot(x, *this * y);
  }

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> t;
    t.reserve(vals_.size());
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
        t.push_back({int(i), cols_[k], vals_[k]});
    return t;
  }

  bool is_symmetric(double rel_tol = 1e-13) const {
    double scale = 0.0;
    for (double v : vals_) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
        if (std::abs(vals_[k] - at(cols_[k], i)) > rel_tol * scale) return false;
    return true;
  }

  std::vector<std::vector<double>> to_dense() const {
    std::vector<std::vector<double>> d(n_, std::vector<double>(n_, 0.0));
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) d[i][cols_[k]] += vals_[k];
    return d;
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<int> cols_;
  std::vector<double> vals_;
};

/// alpha * A + beta * B.
inline SparseOperator combine(double alpha, const SparseOperator& a, double beta,
                              const SparseOperator& b) {
  if (a.size() != b.size()) throw std::invalid_argument("combine: dimension mismatch");
  auto ta = a.triplets();
  auto tb = b.triplets();
  for (auto& t : ta) t.value *= alpha;
  for (auto& t : tb) t.value *= beta;
  ta.insert(ta.end(), tb.begin(), tb.end());
  return SparseOperator(a.size(), std::move(ta));
}

/// Sum of terms with coefficients, e.g. linear_combination({{1/k, M}, {1, S}}).
inline SparseOperator linear_combination(
    std::initializer_list<std::pair<double, const SparseOperator*>> terms) {
  std::size_t n = 0;
  std::vector<Triplet> all;
  for (const auto& [c, op] : terms) {
    if (n == 0) n = op->size();
    if (op->size() != n) throw std::invalid_argument("linear_combination: dimension mismatch");
    for (auto t : op->triplets()) {
      t.value *= c;
      all.push_back(t);
    }
  }
  return SparseOperator(n, std::move(all));
}

}  // namespace chemrep
