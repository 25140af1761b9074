#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "chemrep/linsolve.hpp"
#include "chemrep/mesh.hpp"
#include "chemrep/sparse.hpp"

namespace chemrep {

/// Nodal P1 coefficients, one per mesh node.
class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(std::size_t n, double fill = 0.0) : v_(n, fill) {}
  explicit ScalarField(std::vector<double> v) : v_(std::move(v)) {}

  std::size_t size() const noexcept { return v_.size(); }
  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }
  std::vector<double>& data() noexcept { return v_; }
  const std::vector<double>& data() const noexcept { return v_; }
  operator std::span<const double>() const noexcept { return v_; }
  auto begin() const noexcept { return v_.begin(); }
  auto end() const noexcept { return v_.end(); }

 private:
  std::vector<double> v_;
};

/// Nodal P1 vector field stored component-blocked: [x_0..x_{N-1}, y_0..y_{N-1}].
class VectorField {
 public:
  VectorField() = default;
  explicit VectorField(std::size_t nodes) : v_(2 * nodes, 0.0) {}
  explicit VectorField(std::vector<double> blocked) : v_(std::move(blocked)) {
    if (v_.size() % 2 != 0) throw std::invalid_argument("VectorField: odd coefficient count");
  }

  std::size_t num_nodes() const noexcept { return v_.size() / 2; }
  std::size_t size() const noexcept { return v_.size(); }
  double& x(std::size_t i) { return v_[i]; }
  double& y(std::size_t i) { return v_[num_nodes() + i]; }
  double x(std::size_t i) const { return v_[i]; }
  double y(std::size_t i) const { return v_[num_nodes() + i]; }
  Vec2 at(std::size_t i) const { return {x(i), y(i)}; }
  std::vector<double>& data() noexcept { return v_; }
  const std::vector<double>& data() const noexcept { return v_; }
  operator std::span<const double>() const noexcept { return v_; }

 private:
  std::vector<double> v_;
};

/// One constant 2D vector per element (e.g. the gradient of a P1 field).
using ElementVectors = std::vector<Vec2>;

using ScalarFunction = std::function<double(double, double)>;
using GradientFunction = std::function<Vec2(double, double)>;

// ---------------------------------------------------------------------------
// Quadrature

struct QuadPoint {
  std::array<double, 3> bary;
  double weight;  // fraction of the element area
};

/// Symmetric 7-point rule, exact for polynomials of degree 5.
inline const std::array<QuadPoint, 7>& degree5_rule() {
  static const std::array<QuadPoint, 7> rule = [] {
    const double a1 = 0.059715871789770, b1 = 0.470142064105115, w1 = 0.132394152788506;
    const double a2 = 0.797426985353087, b2 = 0.101286507323456, w2 = 0.125939180544827;
    return std::array<QuadPoint, 7>{{{{1.0 / 3, 1.0 / 3, 1.0 / 3}, 0.225},
                                     {{a1, b1, b1}, w1},
                                     {{b1, a1, b1}, w1},
                                     {{b1, b1, a1}, w1},
                                     {{a2, b2, b2}, w2},
                                     {{b2, a2, b2}, w2},
                                     {{b2, b2, a2}, w2}}};
  }();
  return rule;
}

inline Vec2 bary_point(const StructuredTriMesh& mesh, const std::array<int, 3>& el,
                       const std::array<double, 3>& b) {
  Vec2 x{0.0, 0.0};
  for (int a = 0; a < 3; ++a) {
    x[0] += b[a] * mesh.node(el[a])[0];
    x[1] += b[a] * mesh.node(el[a])[1];
  }
  return x;
}

// ---------------------------------------------------------------------------
// Elementwise helpers

inline void require_nodal(const StructuredTriMesh& mesh, std::span<const double> u,
                          const char* who) {
  if (u.size() != mesh.num_nodes()) {
    throw std::invalid_argument(std::string(who) + ": field has " + std::to_string(u.size()) +
                                " values, mesh has " + std::to_string(mesh.num_nodes()) +
                                " nodes");
  }
}

/// Per-element gradient of a P1 field.
inline ElementVectors grad_p1(const StructuredTriMesh& mesh, std::span<const double> u) {
  require_nodal(mesh, u, "grad_p1");
  ElementVectors g(mesh.num_elements());
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.element(e);
    const auto& geo = mesh.geometry(e);
    Vec2 s{0.0, 0.0};
    for (int a = 0; a < 3; ++a) {
      s[0] += u[el[a]] * geo.grads[a][0];
      s[1] += u[el[a]] * geo.grads[a][1];
    }
    g[e] = s;
  }
  return g;
}

/// Nodal interpolation Pi^h of a pointwise function.
inline ScalarField interp(const StructuredTriMesh& mesh, const ScalarFunction& g) {
  ScalarField out(mesh.num_nodes());
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) out[i] = g(mesh.node(i)[0], mesh.node(i)[1]);
  return out;
}

/// Nodal composition s -> f(u_i); Pi^h(f(u)) for P1 u.
template <class F>
ScalarField compose(std::span<const double> u, F&& f) {
  ScalarField out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = f(u[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Assembly

/// Diagonal of the lumped mass matrix: sum over elements containing i of |K|/3.
inline std::vector<double> lumped_weights(const StructuredTriMesh& mesh) {
  std::vector<double> d(mesh.num_nodes(), 0.0);
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const double w = mesh.geometry(e).area / 3.0;
    for (int a : mesh.element(e)) d[a] += w;
  }
  return d;
}

inline SparseOperator lumped_mass(const StructuredTriMesh& mesh) {
  return SparseOperator::diagonal(lumped_weights(mesh));
}

inline SparseOperator consistent_mass(const StructuredTriMesh& mesh) {
  std::vector<Triplet> t;
  t.reserve(9 * mesh.num_elements());
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.element(e);
    const double w = mesh.geometry(e).area / 12.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) t.push_back({el[a], el[b], (a == b ? 2.0 : 1.0) * w});
  }
  return SparseOperator(mesh.num_nodes(), std::move(t));
}

inline SparseOperator stiffness(const StructuredTriMesh& mesh) {
  std::vector<Triplet> t;
  t.reserve(9 * mesh.num_elements());
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.element(e);
    const auto& geo = mesh.geometry(e);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        t.push_back({el[a], el[b], geo.area * dot(geo.grads[a], geo.grads[b])});
  }
  return SparseOperator(mesh.num_nodes(), std::move(t));
}

/// (A_h v, w) = (grad v, grad w) + (v, w).
inline SparseOperator op_Ah(const StructuredTriMesh& mesh) {
  return combine(1.0, stiffness(mesh), 1.0, consistent_mass(mesh));
}

/// Mask over the blocked vector DOFs: true where sigma . n = 0 pins the component.
inline std::vector<bool> sigma_constraint_mask(const StructuredTriMesh& mesh) {
  const std::size_t n = mesh.num_nodes();
  std::vector<bool> mask(2 * n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto tag = mesh.boundary(i);
    if (tag == BoundaryTag::edge_x || tag == BoundaryTag::corner) mask[i] = true;
    if (tag == BoundaryTag::edge_y || tag == BoundaryTag::corner) mask[n + i] = true;
  }
  return mask;
}

/// Strong imposition of homogeneous constraints: pinned rows and columns are
/// dropped and replaced by a unit diagonal.
inline SparseOperator constrain(const SparseOperator& a, const std::vector<bool>& mask) {
  if (mask.size() != a.size()) throw std::invalid_argument("constrain: mask size mismatch");
  std::vector<Triplet> t;
  for (const auto& tr : a.triplets())
    if (!mask[tr.row] && !mask[tr.col]) t.push_back(tr);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) t.push_back({int(i), int(i), 1.0});
  return SparseOperator(a.size(), std::move(t));
}

inline void zero_constrained(std::span<double> x, const std::vector<bool>& mask) {
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) x[i] = 0.0;
}

/// Blocked vector mass diag(M, M), unconstrained.
inline SparseOperator vector_mass(const StructuredTriMesh& mesh) {
  const int n = int(mesh.num_nodes());
  std::vector<Triplet> t;
  for (const auto& tr : consistent_mass(mesh).triplets()) {
    t.push_back(tr);
    t.push_back({tr.row + n, tr.col + n, tr.value});
  }
  return SparseOperator(2 * mesh.num_nodes(), std::move(t));
}

/// (rot s, rot r) + (div s, div r) on blocked vector P1, unconstrained.
inline SparseOperator rot_div_form(const StructuredTriMesh& mesh) {
  const int n = int(mesh.num_nodes());
  std::vector<Triplet> t;
  t.reserve(36 * mesh.num_elements());
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.element(e);
    const auto& geo = mesh.geometry(e);
    // local dofs 0..2: x-components, 3..5: y-components
    std::array<int, 6> dof;
    std::array<double, 6> div, rot;
    for (int a = 0; a < 3; ++a) {
      dof[a] = el[a];
      dof[a + 3] = el[a] + n;
      div[a] = geo.grads[a][0];
      rot[a] = -geo.grads[a][1];
      div[a + 3] = geo.grads[a][1];
      rot[a + 3] = geo.grads[a][0];
    }
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j)
        t.push_back({dof[i], dof[j], geo.area * (div[i] * div[j] + rot[i] * rot[j])});
  }
  return SparseOperator(2 * mesh.num_nodes(), std::move(t));
}

/// (B_h s, r) = (rot s, rot r) + (div s, div r) + (s, r); with `constrained`
/// the sigma . n = 0 DOFs are eliminated.
inline SparseOperator op_Bh(const StructuredTriMesh& mesh, bool constrained = true) {
  auto b = combine(1.0, rot_div_form(mesh), 1.0, vector_mass(mesh));
  return constrained ? constrain(b, sigma_constraint_mask(mesh)) : b;
}

/// C(w)_{ij} = int phi_j w . grad phi_i for elementwise-constant w (exact).
inline SparseOperator convection_u(const StructuredTriMesh& mesh, const ElementVectors& w) {
  if (w.size() != mesh.num_elements()) {
    throw std::invalid_argument("convection_u: expected one vector per element (" +
                                std::to_string(mesh.num_elements()) + "), got " +
                                std::to_string(w.size()));
  }
  std::vector<Triplet> t;
  t.reserve(9 * mesh.num_elements());
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.element(e);
    const auto& geo = mesh.geometry(e);
    for (int i = 0; i < 3; ++i) {
      const double c = geo.area / 3.0 * dot(w[e], geo.grads[i]);
      for (int j = 0; j < 3; ++j) t.push_back({el[i], el[j], c});
    }
  }
  return SparseOperator(mesh.num_nodes(), std::move(t));
}

/// C(sigma)_{ij} = int phi_j sigma . grad phi_i for nodal P1 sigma (exact).
inline SparseOperator convection_u(const StructuredTriMesh& mesh, const VectorField& sigma) {
  if (sigma.num_nodes() != mesh.num_nodes())
    throw std::invalid_argument("convection_u: vector field size does not match mesh");
  std::vector<Triplet> t;
  t.reserve(9 * mesh.num_elements());
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.element(e);
    const auto& geo = mesh.geometry(e);
    for (int i = 0; i < 3; ++i) {
      std::array<double, 3> s_dot_g;
      for (int a = 0; a < 3; ++a) s_dot_g[a] = dot(sigma.at(el[a]), geo.grads[i]);
      const double total = s_dot_g[0] + s_dot_g[1] + s_dot_g[2];
      for (int j = 0; j < 3; ++j)
        t.push_back({el[i], el[j], geo.area / 12.0 * (total + s_dot_g[j])});
    }
  }
  return SparseOperator(mesh.num_nodes(), std::move(t));
}

/// Load vector b_i = int_K w_K . grad phi_i summed over elements.
inline std::vector<double> gradient_load(const StructuredTriMesh& mesh, const ElementVectors& w) {
  std::vector<double> b(mesh.num_nodes(), 0.0);
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.element(e);
    const auto& geo = mesh.geometry(e);
    for (int i = 0; i < 3; ++i) b[el[i]] += geo.area * dot(w[e], geo.grads[i]);
  }
  return b;
}

/// Blocked vector load b_{(c,j)} = scale * int u g_K[c] phi_j with P1 u and
/// elementwise-constant g, integrated exactly.
inline std::vector<double> weighted_vector_load(const StructuredTriMesh& mesh,
                                                std::span<const double> u,
                                                const ElementVectors& g, double scale) {
  require_nodal(mesh, u, "weighted_vector_load");
  const std::size_t n = mesh.num_nodes();
  std::vector<double> b(2 * n, 0.0);
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.element(e);
    const double area = mesh.geometry(e).area;
    const double usum = u[el[0]] + u[el[1]] + u[el[2]];
    for (int j = 0; j < 3; ++j) {
      const double int_u_phi = area / 12.0 * (usum + u[el[j]]);
      b[el[j]] += scale * g[e][0] * int_u_phi;
      b[n + el[j]] += scale * g[e][1] * int_u_phi;
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Norms

inline double l2_norm(const SparseOperator& mass, std::span<const double> u) {
  return std::sqrt(std::max(0.0, mass.bilinear(u, u)));
}

inline double lumped_norm(std::span<const double> weights, std::span<const double> u) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += weights[i] * u[i] * u[i];
  return std::sqrt(s);
}

/// Exact int |w|^2 for an elementwise-constant vector field.
inline double element_vectors_sq(const StructuredTriMesh& mesh, const ElementVectors& w) {
  double s = 0.0;
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) s += mesh.geometry(e).area * dot(w[e], w[e]);
  return s;
}

// ---------------------------------------------------------------------------
// Projections

/// Q^h of a P1 field: lumped-mass solve of D q = M u.
inline ScalarField project_Qh(const StructuredTriMesh& mesh, std::span<const double> u) {
  require_nodal(mesh, u, "project_Qh");
  const auto d = lumped_weights(mesh);
  auto mu = consistent_mass(mesh) * u;
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] /= d[i];
  return ScalarField(std::move(mu));
}

/// Q^h of a pointwise function: (Q^h g, phi_i)^h = (g, phi_i) with the right
/// side integrated by the degree-5 rule.
inline ScalarField project_Qh(const StructuredTriMesh& mesh, const ScalarFunction& g) {
  const auto d = lumped_weights(mesh);
  std::vector<double> b(mesh.num_nodes(), 0.0);
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.element(e);
    const double area = mesh.geometry(e).area;
    for (const auto& q : degree5_rule()) {
      const Vec2 x = bary_point(mesh, el, q.bary);
      const double gv = g(x[0], x[1]) * q.weight * area;
      for (int a = 0; a < 3; ++a) b[el[a]] += gv * q.bary[a];
    }
  }
  for (std::size_t i = 0; i < b.size(); ++i) b[i] /= d[i];
  return ScalarField(std::move(b));
}

/// L^2 projection of an elementwise-constant vector field onto vector P1.
/// With `constrained` the projection is onto the subspace sigma . n = 0.
inline VectorField project_Qh_vec(const StructuredTriMesh& mesh, const ElementVectors& w,
                                  bool constrained = true, const SolverConfig& cfg = {}) {
  if (w.size() != mesh.num_elements())
    throw std::invalid_argument("project_Qh_vec: expected one vector per element");
  const std::size_t n = mesh.num_nodes();
  std::vector<double> b(2 * n, 0.0);
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.element(e);
    const double third = mesh.geometry(e).area / 3.0;
    for (int a = 0; a < 3; ++a) {
      b[el[a]] += third * w[e][0];
      b[n + el[a]] += third * w[e][1];
    }
  }
  auto mass = vector_mass(mesh);
  if (constrained) {
    const auto mask = sigma_constraint_mask(mesh);
    mass = constrain(mass, mask);
    zero_constrained(b, mask);
  }
  return VectorField(solve_spd(mass, b, cfg).x);
}

/// H^1 projection R^h: (grad R v, grad w) + (R v, w) = (grad v, grad w) + (v, w),
/// right side integrated by the degree-5 rule.
inline ScalarField project_Rh(const StructuredTriMesh& mesh, const ScalarFunction& v,
                              const GradientFunction& grad_v, const SolverConfig& cfg = {}) {
  std::vector<double> b(mesh.num_nodes(), 0.0);
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.element(e);
    const auto& geo = mesh.geometry(e);
    for (const auto& q : degree5_rule()) {
      const Vec2 x = bary_point(mesh, el, q.bary);
      const double w = q.weight * geo.area;
      const double val = v(x[0], x[1]);
      const Vec2 gv = grad_v(x[0], x[1]);
      for (int a = 0; a < 3; ++a) b[el[a]] += w * (val * q.bary[a] + dot(gv, geo.grads[a]));
    }
  }
  return ScalarField(solve_spd(op_Ah(mesh), b, cfg).x);
}

/// R^h of a P1 field (the identity up to solver tolerance).
inline ScalarField project_Rh(const StructuredTriMesh& mesh, std::span<const double> v,
                              const SolverConfig& cfg = {}) {
  require_nodal(mesh, v, "project_Rh");
  const auto a = op_Ah(mesh);
  return ScalarField(solve_spd(a, a * v, cfg).x);
}

// ---------------------------------------------------------------------------

/// Assembled operators reused across time steps on one mesh.
struct FemSpace {
  explicit FemSpace(const StructuredTriMesh& m)
      : mesh(&m),
        weights(lumped_weights(m)),
        mass(consistent_mass(m)),
        stiff(stiffness(m)),
        vmass(vector_mass(m)),
        rotdiv(rot_div_form(m)),
        sigma_mask(sigma_constraint_mask(m)) {}

  const StructuredTriMesh* mesh;
  std::vector<double> weights;  // lumped mass diagonal
  SparseOperator mass;          // consistent scalar mass
  SparseOperator stiff;
  SparseOperator vmass;   // blocked vector mass, unconstrained
  SparseOperator rotdiv;  // rot-rot + div-div, unconstrained
  std::vector<bool> sigma_mask;

  std::size_t nodes() const noexcept { return mesh->num_nodes(); }

  double lumped_dot(std::span<const double> a, std::span<const double> b) const {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += weights[i] * a[i] * b[i];
    return s;
  }
  double lumped_integral(std::span<const double> a) const {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += weights[i] * a[i];
    return s;
  }
  double l2(std::span<const double> u) const { return l2_norm(mass, u); }
  double l2_vec(std::span<const double> s) const { return l2_norm(vmass, s); }
  double grad_sq(std::span<const double> u) const { return stiff.bilinear(u, u); }
};

}  // namespace chemrep
