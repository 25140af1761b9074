#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace chemrep {

using Vec2 = std::array<double, 2>;

inline double dot(const Vec2& a, const Vec2& b) noexcept { return a[0] * b[0] + a[1] * b[1]; }

/// Position of a node relative to the rectangle boundary.  edge_x marks the
/// vertical sides (outward normal along x), edge_y the horizontal ones.
enum class BoundaryTag : std::uint8_t { interior, edge_x, edge_y, corner };

struct ElementGeometry {
  double area;
  std::array<Vec2, 3> grads;  // gradients of the barycentric hat functions
};

/// Area and hat-function gradients of an arbitrary non-degenerate triangle.
inline ElementGeometry triangle_geometry(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
  if (det == 0.0) throw std::invalid_argument("triangle_geometry: degenerate triangle");
  const double inv = 1.0 / det;
  ElementGeometry g;
  g.area = 0.5 * std::abs(det);
  // grad(lambda_i) = rot90(opposite edge) / det
  g.grads[0] = {(b[1] - c[1]) * inv, (c[0] - b[0]) * inv};
  g.grads[1] = {(c[1] - a[1]) * inv, (a[0] - c[0]) * inv};
  g.grads[2] = {(a[1] - b[1]) * inv, (b[0] - a[0]) * inv};
  return g;
}

/**
 * Conforming right-angled triangulation of [0, lx] x [0, ly].
 *
 * Every rectangular cell is cut along its lower-left to upper-right diagonal.
 * Elements are stored as (a0, a1, a2) with a0 the right-angle vertex, a0->a1
 * parallel to x and a0->a2 parallel to y.  Node (i, j) has index
 * j * (nx + 1) + i.
 */
class StructuredTriMesh {
 public:
  StructuredTriMesh(int nx, int ny, double lx, double ly) : nx_(nx), ny_(ny), lx_(lx), ly_(ly) {
    if (nx < 1 || ny < 1) {
      throw std::invalid_argument("StructuredTriMesh: cell counts must be >= 1 (got " +
                                  std::to_string(nx) + "x" + std::to_string(ny) + ")");
    }
    if (!(lx > 0.0) || !(ly > 0.0) || !std::isfinite(lx) || !std::isfinite(ly)) {
      throw std::invalid_argument("StructuredTriMesh: side lengths must be positive");
    }
    hx_ = lx / nx;
    hy_ = ly / ny;

    nodes_.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1));
    tags_.reserve(nodes_.capacity());
    for (int j = 0; j <= ny; ++j) {
      for (int i = 0; i <= nx; ++i) {
        // Pin the far sides exactly so boundary detection never depends on rounding.
        const double x = (i == nx) ? lx : i * hx_;
        const double y = (j == ny) ? ly : j * hy_;
        nodes_.push_back({x, y});
        const bool bx = (i == 0 || i == nx);
        const bool by = (j == 0 || j == ny);
        tags_.push_back(bx && by ? BoundaryTag::corner
                        : bx     ? BoundaryTag::edge_x
                        : by     ? BoundaryTag::edge_y
                                 : BoundaryTag::interior);
      }
    }

    elements_.reserve(2 * static_cast<std::size_t>(nx) * ny);
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        const int ll = node_index(i, j);
        const int lr = node_index(i + 1, j);
        const int ul = node_index(i, j + 1);
        const int ur = node_index(i + 1, j + 1);
        elements_.push_back({lr, ll, ur});  // right angle at lower-right
        elements_.push_back({ul, ur, ll});  // right angle at upper-left
      }
    }

    geometry_.reserve(elements_.size());
    for (const auto& e : elements_) {
      geometry_.push_back(triangle_geometry(nodes_[e[0]], nodes_[e[1]], nodes_[e[2]]));
    }
  }

  int nx() const noexcept { return nx_; }
  int ny() const noexcept { return ny_; }
  double lx() const noexcept { return lx_; }
  double ly() const noexcept { return ly_; }
  double hx() const noexcept { return hx_; }
  double hy() const noexcept { return hy_; }
  double domain_area() const noexcept { return lx_ * ly_; }

  /// Largest element diameter (the hypotenuse).
  double h() const noexcept { return std::hypot(hx_, hy_); }

  std::size_t num_nodes() const noexcept { return nodes_.size(); }
  std::size_t num_elements() const noexcept { return elements_.size(); }

  int node_index(int i, int j) const noexcept { return j * (nx_ + 1) + i; }

  const std::vector<Vec2>& nodes() const noexcept { return nodes_; }
  const std::vector<std::array<int, 3>>& elements() const noexcept { return elements_; }
  const Vec2& node(std::size_t i) const { return nodes_.at(i); }
  const std::array<int, 3>& element(std::size_t e) const { return elements_.at(e); }
  BoundaryTag boundary(std::size_t i) const { return tags_.at(i); }

  const ElementGeometry& geometry(std::size_t e) const {
    if (e >= geometry_.size()) {
      throw std::out_of_range("StructuredTriMesh::geometry: element " + std::to_string(e) +
                              " out of range");
    }
    return geometry_[e];
  }

 private:
  int nx_, ny_;
  double lx_, ly_;
  double hx_ = 0.0, hy_ = 0.0;
  std::vector<Vec2> nodes_;
  std::vector<BoundaryTag> tags_;
  std::vector<std::array<int, 3>> elements_;
  std::vector<ElementGeometry> geometry_;
};

}  // namespace chemrep
