#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "plate_support/errors.hpp"

namespace plate_support {

/// Lattice coordinates of a node.
struct NodeIJ {
  int i = 0;
  int j = 0;
  friend bool operator==(const NodeIJ&, const NodeIJ&) = default;
};

/// Rectangular lattice over the domain. Nodes are indexed row-major:
/// index = j * nx + i, so a "row" is a line of constant y.
class Grid2D {
 public:
  Grid2D(int nx, int ny, double delta, std::array<double, 2> origin = {0.0, 0.0})
      : nx_(nx), ny_(ny), delta_(delta), origin_(origin) {
    if (nx < 4 || ny < 4) throw ConfigError("grid needs at least 4 nodes per axis");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("grid spacing must be positive");
    for (int i = 0; i < nx; ++i) boundary_.push_back(index(i, 0));
    for (int j = 1; j < ny; ++j) boundary_.push_back(index(nx - 1, j));
    for (int i = nx - 2; i >= 0; --i) boundary_.push_back(index(i, ny - 1));
    for (int j = ny - 2; j >= 1; --j) boundary_.push_back(index(0, j));
    std::sort(boundary_.begin(), boundary_.end());
  }

  /// Unit-square style grid with n nodes per axis over [0, extent]^2.
  static Grid2D square(int n, double extent = 1.0) { return Grid2D(n, n, extent / (n - 1)); }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int size() const { return nx_ * ny_; }
  double delta() const { return delta_; }
  const std::array<double, 2>& origin() const { return origin_; }
  double extent_x() const { return (nx_ - 1) * delta_; }
  double extent_y() const { return (ny_ - 1) * delta_; }
  double cell_area() const { return delta_ * delta_; }

  int index(int i, int j) const { return j * nx_ + i; }
  NodeIJ ij(int node) const { return {node % nx_, node / nx_}; }
  bool contains(int i, int j) const { return i >= 0 && j >= 0 && i < nx_ && j < ny_; }
  double x(int i) const { return origin_[0] + i * delta_; }
  double y(int j) const { return origin_[1] + j * delta_; }
  std::array<double, 2> position(int node) const {
    const auto p = ij(node);
    return {x(p.i), y(p.j)};
  }

  bool on_boundary(int node) const {
    const auto p = ij(node);
    return p.i == 0 || p.j == 0 || p.i == nx_ - 1 || p.j == ny_ - 1;
  }
  /// Sorted perimeter node indices.
  const std::vector<int>& boundary_nodes() const { return boundary_; }

  /// 4-neighbours that exist on the grid.
  template <class F>
  void for_each_neighbor(int node, F&& fn) const {
    const auto p = ij(node);
    if (p.i > 0) fn(node - 1);
    if (p.i < nx_ - 1) fn(node + 1);
    if (p.j > 0) fn(node - nx_);
    if (p.j < ny_ - 1) fn(node + nx_);
  }

  /// Trapezoid quadrature weight of a node (delta^2 in the interior).
  double trapezoid_weight(int node) const {
    const auto p = ij(node);
    double w = delta_ * delta_;
    if (p.i == 0 || p.i == nx_ - 1) w *= 0.5;
    if (p.j == 0 || p.j == ny_ - 1) w *= 0.5;
    return w;
  }

  bool same_shape(const Grid2D& o) const {
    return nx_ == o.nx_ && ny_ == o.ny_ && delta_ == o.delta_ && origin_ == o.origin_;
  }

 private:
  int nx_;
  int ny_;
  double delta_;
  std::array<double, 2> origin_;
  std::vector<int> boundary_;
};

/// Symmetric 2x2 tensor stored as (t11, t12, t22).
struct Sym2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;

  /// Frobenius inner product A:B.
  double dot(const Sym2& o) const { return xx * o.xx + 2.0 * xy * o.xy + yy * o.yy; }
  double norm2() const { return dot(*this); }
  double trace() const { return xx + yy; }
  Sym2 operator+(const Sym2& o) const { return {xx + o.xx, xy + o.xy, yy + o.yy}; }
  Sym2 operator-(const Sym2& o) const { return {xx - o.xx, xy - o.xy, yy - o.yy}; }
  Sym2 operator*(double s) const { return {xx * s, xy * s, yy * s}; }
};

/// Nodal field over a grid. T is double, std::array<double, 2> or Sym2.
template <class T>
class NodalField {
 public:
  using value_type = T;

  explicit NodalField(Grid2D grid, T fill = T{}) : grid_(std::move(grid)), values_(grid_.size(), fill) {}
  NodalField(Grid2D grid, std::vector<T> values) : grid_(std::move(grid)), values_(std::move(values)) {
    if (static_cast<int>(values_.size()) != grid_.size())
      throw ConfigError("field value count does not match the grid");
  }

  /// Samples fn(x, y) at every node.
  static NodalField sample(const Grid2D& grid, const std::function<T(double, double)>& fn) {
    NodalField out(grid);
    for (int n = 0; n < grid.size(); ++n) {
      const auto p = grid.position(n);
      out[n] = fn(p[0], p[1]);
    }
    return out;
  }

  const Grid2D& grid() const { return grid_; }
  int size() const { return static_cast<int>(values_.size()); }
  T& operator[](int n) { return values_[n]; }
  const T& operator[](int n) const { return values_[n]; }
  T& at(int i, int j) { return values_[grid_.index(i, j)]; }
  const T& at(int i, int j) const { return values_[grid_.index(i, j)]; }
  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }

 private:
  Grid2D grid_;
  std::vector<T> values_;
};

using ScalarField2D = NodalField<double>;
using VectorField2D = NodalField<std::array<double, 2>>;
using TensorField2D = NodalField<Sym2>;

/// sum_n a[n] b[n] delta^2, the nodal (degenerate trapezoid) quadrature.
inline double nodal_inner(const ScalarField2D& a, const ScalarField2D& b) {
  double s = 0.0;
  for (int n = 0; n < a.size(); ++n) s += a[n] * b[n];
  return s * a.grid().cell_area();
}

/// sum_n a[n] b[n] w_n with trapezoid weights, halved on the rim.
inline double trapezoid_inner(const ScalarField2D& a, const ScalarField2D& b) {
  double s = 0.0;
  for (int n = 0; n < a.size(); ++n) s += a[n] * b[n] * a.grid().trapezoid_weight(n);
  return s;
}

inline double max_abs(const ScalarField2D& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

/// Discrete L2 norm sqrt(sum v^2 delta^2).
inline double l2_norm(const ScalarField2D& a) { return std::sqrt(nodal_inner(a, a)); }

}  // namespace plate_support
