#pragma once

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "plate_support/biharmonic.hpp"
#include "plate_support/dual.hpp"
#include "plate_support/errors.hpp"
#include "plate_support/support_graph.hpp"

namespace plate_support {

inline constexpr double kPi = 3.14159265358979323846;

/// Length of segment ab inside the closed disc of radius r about c.
inline double segment_in_disc(const std::array<double, 2>& a, const std::array<double, 2>& b,
                              const std::array<double, 2>& c, double r) {
  const double dx = b[0] - a[0], dy = b[1] - a[1];
  const double fx = a[0] - c[0], fy = a[1] - c[1];
  const double A = dx * dx + dy * dy;
  if (A == 0.0) return 0.0;
  const double B = 2 * (fx * dx + fy * dy), C = fx * fx + fy * fy - r * r;
  const double disc = B * B - 4 * A * C;
  if (disc <= 0.0) return 0.0;
  const double s = std::sqrt(disc);
  const double t0 = std::max(0.0, (-B - s) / (2 * A)), t1 = std::min(1.0, (-B + s) / (2 * A));
  return t1 > t0 ? (t1 - t0) * std::sqrt(A) : 0.0;
}

/// H^1(K cap B_r(c)).
inline double length_in_ball(const SupportGraph& K, const std::array<double, 2>& c, double r) {
  const auto& g = K.grid();
  double s = 0.0;
  for (const auto& e : K.edges()) s += segment_in_disc(g.position(e.a), g.position(e.b), c, r);
  return s;
}

/// Largest distance between two nodes of K.
inline double diameter(const SupportGraph& K) {
  const auto& g = K.grid();
  double d = 0.0;
  for (std::size_t a = 0; a < K.nodes().size(); ++a)
    for (std::size_t b = a + 1; b < K.nodes().size(); ++b) {
      const auto p = g.position(K.nodes()[a]), q = g.position(K.nodes()[b]);
      d = std::max(d, std::hypot(p[0] - q[0], p[1] - q[1]));
    }
  return d;
}

/// K with its dual field: the pair the audits test.
struct AuditInput {
  SupportGraph K;
  CrackMesh mesh;
  std::vector<std::array<double, 2>> v;
  CellTensors G;
  double f_norm = 0.0;  // sup norm of f
  double lambda = 1.0;  // length weight, as in the optimizer objective

  static AuditInput from(const SupportGraph& K, const ScalarField2D& f, double lambda = 1.0) {
    if (!(lambda > 0.0)) throw ConfigError("audit length weight must be > 0");
    auto mesh = CrackMesh::build(K);
    const auto G = cell_average(build_G(solve_poisson(f)));
    auto sol = solve_dual(mesh, G);
    return {K, std::move(mesh), std::move(sol.v), G, max_abs(f), lambda};
  }

  /// |e_h(v) - G|^2 delta^2 per cell.
  std::vector<double> cell_energy() const {
    const auto e = symmetric_gradient(mesh, v);
    std::vector<double> out(e.size());
    for (std::size_t c = 0; c < e.size(); ++c) out[c] = (e[c] - G[c]).norm2() * mesh.grid.cell_area();
    return out;
  }
};

struct BallAudit {
  int center = -1;
  double r = 0.0;
  double energy = 0.0;  // dual energy of cells centred in the ball
  double length = 0.0;  // H^1(K cap B_r)
  bool lower_checked = false;
  bool lower_violation = false;
  double upper_ratio = 0.0;     // (energy + lambda (length - 2 pi r)) / (|f| r^2)
  double feasible_ratio = 0.0;  // (energy + lambda max(0, length - 2 pi r)) / (|f| r^2)
};

struct AhlforsReport {
  std::vector<BallAudit> balls;
  int lower_violations = 0;
  int lower_checked = 0;
  double c_min = 0.0;    // smallest C with energy + lambda length <= lambda 2 pi r + C |f| r^2, may be negative
  double c_upper = 0.0;  // same bound without crediting spare length to the energy; the calibrated C
  double diam = 0.0;
};

namespace detail {
inline std::array<double, 2> cell_centre(const Grid2D& g, int c) {
  const int cx = g.nx() - 1;
  return {g.origin()[0] + (c % cx + 0.5) * g.delta(), g.origin()[1] + (c / cx + 0.5) * g.delta()};
}
}  // namespace detail

/// Density bounds on balls centred on K: H^1(K cap B_r) >= r whenever
/// r <= diam(K)/2, and the calibrated constant of the upper bound.
inline AhlforsReport ahlfors_audit(const AuditInput& in, const std::vector<int>& centers,
                                   const std::vector<double>& radii) {
  const auto& g = in.K.grid();
  const auto ce = in.cell_energy();
  AhlforsReport rep;
  rep.diam = diameter(in.K);
  rep.c_min = -std::numeric_limits<double>::infinity();
  const double fn = in.f_norm > 0 ? in.f_norm : 1.0;
  for (int x : centers) {
    if (!in.K.has_node(x)) throw CenterNotOnK(x);
    const auto c = g.position(x);
    for (double r : radii) {
      BallAudit b;
      b.center = x;
      b.r = r;
      for (int k = 0; k < static_cast<int>(ce.size()); ++k) {
        const auto p = detail::cell_centre(g, k);
        if (std::hypot(p[0] - c[0], p[1] - c[1]) <= r) b.energy += ce[k];
      }
      b.length = length_in_ball(in.K, c, r);
      if (r <= rep.diam / 2) {
        b.lower_checked = true;
        b.lower_violation = b.length < r * (1 - 1e-12);
        ++rep.lower_checked;
        rep.lower_violations += b.lower_violation;
      }
      b.upper_ratio = (b.energy + in.lambda * (b.length - 2 * kPi * r)) / (fn * r * r);
      b.feasible_ratio = (b.energy + in.lambda * std::max(0.0, b.length - 2 * kPi * r)) / (fn * r * r);
      rep.c_min = std::max(rep.c_min, b.upper_ratio);
      rep.c_upper = std::max(rep.c_upper, b.feasible_ratio);
      rep.balls.push_back(b);
    }
  }
  if (rep.balls.empty()) rep.c_min = 0.0;
  return rep;
}

struct GriffithBall {
  int center = -1;
  double r = 0.0;
  double minimizer_side = 0.0;  // dual energy in R + lambda * length of K on R's closure
  double competitor_side = 0.0; // |G|^2 in R + lambda * corrected lattice circle
  double circle_raw = 0.0;      // lattice perimeter of R before the pi/4 correction
  double excess = 0.0;          // minimizer - competitor
};

struct GriffithReport {
  std::vector<GriffithBall> balls;
  double calibrated_C = 0.0;  // smallest C with excess <= C r^{3/2}

  int violations_at(double C) const {
    int n = 0;
    for (const auto& b : balls) n += b.excess > C * std::pow(b.r, 1.5) * (1 + 1e-12) + 1e-15;
    return n;
  }
};

/// Compares (v, K) on each ball with the competitor that clears K inside the
/// ball, sets v = 0 there and adds the lattice circle bounding the ball.
inline GriffithReport griffith_competitor_audit(const AuditInput& in, const std::vector<int>& centers,
                                                const std::vector<double>& radii, bool interior_only = false) {
  const auto& g = in.K.grid();
  const int cx = g.nx() - 1, cy = g.ny() - 1;
  const auto ce = in.cell_energy();
  GriffithReport rep;
  for (int x : centers) {
    const auto c = g.position(x);
    for (double r : radii) {
      if (interior_only && (c[0] - r < g.origin()[0] || c[1] - r < g.origin()[1] ||
                            c[0] + r > g.origin()[0] + g.extent_x() || c[1] + r > g.origin()[1] + g.extent_y()))
        throw BallNotInterior();
      std::vector<char> in_ball(static_cast<std::size_t>(cx) * cy, 0);
      GriffithBall b;
      b.center = x;
      b.r = r;
      for (int k = 0; k < cx * cy; ++k) {
        const auto p = detail::cell_centre(g, k);
        if (std::hypot(p[0] - c[0], p[1] - c[1]) <= r) {
          in_ball[k] = 1;
          b.minimizer_side += ce[k];
          b.competitor_side += in.G[k].norm2() * g.cell_area();
        }
      }
      auto cell_in = [&](int i, int j) { return i >= 0 && j >= 0 && i < cx && j < cy && in_ball[j * cx + i]; };
      // K edges on sides of ball cells
      for (const auto& e : in.K.edges()) {
        const auto pa = g.ij(e.a), pb = g.ij(e.b);
        const bool horiz = pa.j == pb.j;
        const int i = std::min(pa.i, pb.i), j = std::min(pa.j, pb.j);
        const bool touches = horiz ? (cell_in(i, j) || cell_in(i, j - 1)) : (cell_in(i, j) || cell_in(i - 1, j));
        if (touches) b.minimizer_side += in.lambda * g.delta();
      }
      // lattice circle: sides between a ball cell and a non-ball cell inside the grid
      int sides = 0;
      for (int j = 0; j < cy; ++j)
        for (int i = 0; i < cx; ++i) {
          if (!cell_in(i, j)) continue;
          if (i + 1 < cx && !cell_in(i + 1, j)) ++sides;
          if (i > 0 && !cell_in(i - 1, j)) ++sides;
          if (j + 1 < cy && !cell_in(i, j + 1)) ++sides;
          if (j > 0 && !cell_in(i, j - 1)) ++sides;
        }
      b.circle_raw = sides * g.delta();
      b.competitor_side += in.lambda * kPi / 4 * b.circle_raw;
      b.excess = b.minimizer_side - b.competitor_side;
      rep.calibrated_C = std::max(rep.calibrated_C, b.excess / std::pow(r, 1.5));
      rep.balls.push_back(b);
    }
  }
  return rep;
}

/// Deletes a random fraction of K's removable-by-choice edges, then reconnects
/// the pieces greedily with straight lattice paths.
template <class Rng>
SupportGraph damage_support(const SupportGraph& K, double fraction, Rng& rng) {
  const auto& g = K.grid();
  std::vector<Edge> kept;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& e : K.edges())
    if ((K.include_boundary() && K.is_perimeter_edge(e)) || u(rng) >= fraction) kept.push_back(e);
  SupportGraph D(g, {}, kept, K.include_boundary());
  if (D.empty()) return K;
  // join components to the first by an L-shaped path between their closest nodes
  while (!is_connected(D)) {
    detail::DisjointSets ds(g.size());
    for (const auto& e : D.edges()) ds.unite(e.a, e.b);
    const int root = ds.find(D.nodes().front());
    int best_a = -1, best_b = -1, best_d = std::numeric_limits<int>::max();
    for (int a : D.nodes()) {
      if (ds.find(a) != root) continue;
      for (int b : D.nodes()) {
        if (ds.find(b) == root) continue;
        const auto pa = g.ij(a), pb = g.ij(b);
        const int d = std::abs(pa.i - pb.i) + std::abs(pa.j - pb.j);
        if (d < best_d) best_d = d, best_a = a, best_b = b;
      }
    }
    const auto pa = g.ij(best_a), pb = g.ij(best_b);
    D = unite(D, unite(SupportGraph::segment(g, pa.i, pa.j, pb.i, pa.j), SupportGraph::segment(g, pb.i, pa.j, pb.i, pb.j)));
  }
  return D;
}

struct ContinuityRow {
  double set_distance = 0.0;
  double field_distance = 0.0;
};

struct ContinuityReport {
  std::vector<ContinuityRow> rows;
  bool field_monotone = true;  // non-increasing, up to tol
  double final_field_distance = 0.0;
};

/// Hausdorff distance of each K_n to the last element against the discrete
/// H^2 distance of the clamped solutions.
inline ContinuityReport continuity_audit(const ScalarField2D& f, const std::vector<SupportGraph>& seq,
                                         double tol = 1e-8) {
  if (seq.empty()) throw ConfigError("continuity audit needs a non-empty sequence");
  const auto& last = seq.back();
  std::vector<double> dist;
  for (const auto& K : seq) dist.push_back(hausdorff_distance(K, last));
  for (std::size_t k = 1; k < dist.size(); ++k) {
    if (dist[k] > dist[k - 1]) throw ConfigError("support sequence does not Hausdorff-converge to its last element");
  }
  const auto u_last = solve_plate(last, f).first;
  ContinuityReport rep;
  for (std::size_t k = 0; k < seq.size(); ++k) {
    const double fd = k + 1 == seq.size() ? 0.0 : h2_seminorm_distance(solve_plate(seq[k], f).first, u_last);
    rep.rows.push_back({dist[k], fd});
  }
  for (std::size_t k = 1; k < rep.rows.size(); ++k)
    if (rep.rows[k].field_distance > rep.rows[k - 1].field_distance + tol) rep.field_monotone = false;
  rep.final_field_distance = rep.rows.back().field_distance;
  return rep;
}

/// K minus its n outermost leaf edges, stripping one leaf at a time from the
/// node furthest from the grid rim (perimeter edges are never stripped).
inline SupportGraph strip_leaves(SupportGraph K, int n) {
  const auto& g = K.grid();
  auto rim_distance = [&](int node) {
    const auto p = g.ij(node);
    return std::min({p.i, p.j, g.nx() - 1 - p.i, g.ny() - 1 - p.j});
  };
  for (int s = 0; s < n; ++s) {
    const Edge* pick = nullptr;
    int best = -1;
    for (const auto& e : K.edges()) {
      if (K.is_perimeter_edge(e)) continue;
      for (int leaf : {e.a, e.b})
        if (K.degree(leaf) == 1 && rim_distance(leaf) > best) {
          best = rim_distance(leaf);
          pick = &e;
        }
    }
    if (!pick) break;
    K = K.without_edge(*pick);
  }
  return K;
}

/// Sequence K_n = strip_leaves(K, n) for the given counts, in order.
inline std::vector<SupportGraph> leaf_removal_sequence(const SupportGraph& K, const std::vector<int>& counts) {
  std::vector<SupportGraph> out;
  for (int n : counts) out.push_back(strip_leaves(K, n));
  return out;
}

namespace detail {

/// Smallest eigenvalue of A x = lambda M x (M diagonal) by inverse iteration.
inline double smallest_generalized_eigenvalue(const SparseMatrix& A, const Eigen::VectorXd& mass, double tol = 1e-10,
                                              int max_iter = 500) {
  Eigen::VectorXd x = Eigen::VectorXd::Ones(A.rows());
  x /= std::sqrt(x.dot(mass.asDiagonal() * x));
  double lam = x.dot(A * x);
  for (int it = 0; it < max_iter; ++it) {
    long cg_it = 0;
    double res = 0.0;
    Eigen::VectorXd y = pcg_solve(A, mass.asDiagonal() * x, 1e-12, default_max_iter(A.rows()), &x, cg_it, res,
                                  "Poincare inner solve");
    y /= std::sqrt(y.dot(mass.asDiagonal() * y));
    const double next = y.dot(A * y);
    x = y;
    if (std::abs(next - lam) <= tol * next) return next;
    lam = next;
  }
  throw NoConvergence("Poincare inverse iteration", max_iter, 0.0);
}

}  // namespace detail

/// Best constant C in |u|_{L2} <= C |grad u|_{L2} over fields vanishing on K's
/// nodes: 1 / sqrt(lambda_1) of the clamped 5-point Laplacian.
inline double poincare_probe(const SupportGraph& K) {
  const auto& g = K.grid();
  if (K.empty()) throw EmptyClampSet();
  std::vector<int> slot(g.size(), -1);
  int nfree = 0;
  for (int n = 0; n < g.size(); ++n)
    if (!K.has_node(n)) slot[n] = nfree++;
  if (nfree == 0) return 0.0;
  std::vector<Eigen::Triplet<double>> t;
  Eigen::VectorXd mass(nfree);
  for (int n = 0; n < g.size(); ++n) {
    if (slot[n] >= 0) mass[slot[n]] = g.trapezoid_weight(n);
    g.for_each_neighbor(n, [&](int m) {
      if (m < n) return;
      // each edge carries the area of the cells beside it: half on the rim
      const double w = (g.on_boundary(n) && g.on_boundary(m)) ? 0.5 : 1.0;
      for (int a : {n, m})
        for (int b : {n, m})
          if (slot[a] >= 0 && slot[b] >= 0) t.emplace_back(slot[a], slot[b], a == b ? w : -w);
    });
  }
  SparseMatrix A(nfree, nfree);
  A.setFromTriplets(t.begin(), t.end());
  return 1.0 / std::sqrt(detail::smallest_generalized_eigenvalue(A, mass));
}

/// Same constant on a slab (footprint of K's grid) x (0, h) with nz layers,
/// pinned on the bottom face over dilate(K, h).
inline double thin_poincare_probe(const SupportGraph& K, double h, int nz) {
  const auto& g = K.grid();
  if (nz < 2 || !(h > 0)) throw ConfigError("thin slab needs nz >= 2 and h > 0");
  const auto glued = dilate(K, h);
  std::vector<char> pinned(g.size(), 0);
  for (int n : glued) pinned[n] = 1;
  const double dz = h / (nz - 1);
  const int N = g.size() * nz;
  std::vector<int> slot(N, -1);
  int nfree = 0;
  for (int k = 0; k < nz; ++k)
    for (int n = 0; n < g.size(); ++n)
      if (!(k == 0 && pinned[n])) slot[k * g.size() + n] = nfree++;
  if (nfree == 0) return 0.0;
  auto zw = [&](int k) { return (k == 0 || k == nz - 1) ? 0.5 : 1.0; };
  std::vector<Eigen::Triplet<double>> t;
  Eigen::VectorXd mass(nfree);
  auto add_edge = [&](int a, int b, double w) {
    for (int p : {a, b})
      for (int q : {a, b})
        if (slot[p] >= 0 && slot[q] >= 0) t.emplace_back(slot[p], slot[q], p == q ? w : -w);
  };
  for (int k = 0; k < nz; ++k)
    for (int n = 0; n < g.size(); ++n) {
      const int id = k * g.size() + n;
      if (slot[id] >= 0) mass[slot[id]] = g.trapezoid_weight(n) * dz * zw(k);
      // in-plane edge: face area (d * dz) over length d, times the z weight
      g.for_each_neighbor(n, [&](int m) {
        if (m < n) return;
        const double w = (g.on_boundary(n) && g.on_boundary(m)) ? 0.5 : 1.0;
        add_edge(id, k * g.size() + m, w * dz * zw(k));
      });
      // vertical edge: face area (trapezoid footprint) over length dz
      if (k + 1 < nz) add_edge(id, id + g.size(), g.trapezoid_weight(n) / dz);
    }
  SparseMatrix A(nfree, nfree);
  A.setFromTriplets(t.begin(), t.end());
  // the slab volume scales with h; the constant compares L2 norms over it
  return 1.0 / std::sqrt(detail::smallest_generalized_eigenvalue(A, mass));
}

}  // namespace plate_support
