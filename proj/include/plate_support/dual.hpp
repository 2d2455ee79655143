#pragma once

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "plate_support/biharmonic.hpp"
#include "plate_support/errors.hpp"
#include "plate_support/grid.hpp"
#include "plate_support/support_graph.hpp"

namespace plate_support {

/// Cell-indexed symmetric tensors; cell (i, j) has index j * (nx - 1) + i.
using CellTensors = std::vector<Sym2>;

/// Discrete -Lap phi = f, phi = 0 on the grid perimeter (5-point stencil).
inline ScalarField2D solve_poisson(const ScalarField2D& f, double tol = 1e-10) {
  const Grid2D& g = f.grid();
  std::vector<int> slot(g.size(), -1), interior;
  for (int n = 0; n < g.size(); ++n)
    if (!g.on_boundary(n)) {
      slot[n] = static_cast<int>(interior.size());
      interior.push_back(n);
    }
  ScalarField2D phi(g, 0.0);
  if (interior.empty()) return phi;
  const double inv = 1.0 / g.cell_area();
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd b(interior.size());
  for (std::size_t k = 0; k < interior.size(); ++k) {
    const int n = interior[k];
    trip.emplace_back(k, k, 4 * inv);
    g.for_each_neighbor(n, [&](int m) {
      if (slot[m] >= 0) trip.emplace_back(k, slot[m], -inv);
    });
    b[k] = f[n];
  }
  SparseMatrix A(b.size(), b.size());
  A.setFromTriplets(trip.begin(), trip.end());
  long it = 0;
  double res = 0.0;
  const Eigen::VectorXd x = pcg_solve(A, b, tol, default_max_iter(b.size()), nullptr, it, res, "Poisson PCG");
  for (std::size_t k = 0; k < interior.size(); ++k) phi[interior[k]] = x[k];
  return phi;
}

/// G = phi Id at every node.
inline TensorField2D build_G(const ScalarField2D& phi) {
  TensorField2D G(phi.grid());
  for (int n = 0; n < phi.size(); ++n) G[n] = Sym2{phi[n], 0.0, phi[n]};
  return G;
}

/// Average of the four corner values of a nodal tensor field, per cell.
inline CellTensors cell_average(const TensorField2D& T) {
  const Grid2D& g = T.grid();
  CellTensors out;
  out.reserve(static_cast<std::size_t>(g.nx() - 1) * (g.ny() - 1));
  for (int j = 0; j + 1 < g.ny(); ++j)
    for (int i = 0; i + 1 < g.nx(); ++i)
      out.push_back((T.at(i, j) + T.at(i + 1, j) + T.at(i, j + 1) + T.at(i + 1, j + 1)) * 0.25);
  return out;
}

/// Grid with nodes on K split per cell sector, so displacements may jump across K.
struct CrackMesh {
  Grid2D grid;
  std::vector<int> dof_node;                  // grid node of each displacement dof
  std::vector<std::array<int, 4>> cell_dofs;  // corners (i,j), (i+1,j), (i,j+1), (i+1,j+1)
  std::vector<int> component;                 // per cell
  int component_count = 0;

  int cell_count() const { return static_cast<int>(cell_dofs.size()); }
  int dof_count() const { return static_cast<int>(dof_node.size()); }
  int cell_index(int i, int j) const { return j * (grid.nx() - 1) + i; }

  static CrackMesh build(const SupportGraph& K) {
    const Grid2D& g = K.grid();
    CrackMesh m{g};
    const int cx = g.nx() - 1, cy = g.ny() - 1;
    m.cell_dofs.assign(static_cast<std::size_t>(cx) * cy, {-1, -1, -1, -1});
    // corner c of cell (ci,cj) sits at offset (oi, oj); the cell is quadrant q of that node
    static constexpr int oi[4] = {0, 1, 0, 1}, oj[4] = {0, 0, 1, 1}, quadrant[4] = {0, 1, 3, 2};
    std::vector<std::array<int, 4>> node_quadrant_dof(g.size(), {-1, -1, -1, -1});
    for (int n = 0; n < g.size(); ++n) {
      if (K.has_node(n)) {
        for (const auto& s : node_sectors(K, n)) {
          const int d = m.dof_count();
          m.dof_node.push_back(n);
          for (int q : s.quadrants) node_quadrant_dof[n][q] = d;
        }
      } else {
        const int d = m.dof_count();
        m.dof_node.push_back(n);
        node_quadrant_dof[n] = {d, d, d, d};
      }
    }
    for (int cj = 0; cj < cy; ++cj)
      for (int ci = 0; ci < cx; ++ci)
        for (int c = 0; c < 4; ++c)
          m.cell_dofs[m.cell_index(ci, cj)][c] = node_quadrant_dof[g.index(ci + oi[c], cj + oj[c])][quadrant[c]];

    // cells sharing an edge that is not in K are connected
    detail::DisjointSets ds(m.cell_count());
    for (int cj = 0; cj < cy; ++cj)
      for (int ci = 0; ci < cx; ++ci) {
        if (ci + 1 < cx && !K.has_edge(Edge(g.index(ci + 1, cj), g.index(ci + 1, cj + 1))))
          ds.unite(m.cell_index(ci, cj), m.cell_index(ci + 1, cj));
        if (cj + 1 < cy && !K.has_edge(Edge(g.index(ci, cj + 1), g.index(ci + 1, cj + 1))))
          ds.unite(m.cell_index(ci, cj), m.cell_index(ci, cj + 1));
      }
    std::vector<int> label(m.cell_count(), -1);
    m.component.resize(m.cell_count());
    for (int c = 0; c < m.cell_count(); ++c) {
      const int r = ds.find(c);
      if (label[r] < 0) label[r] = m.component_count++;
      m.component[c] = label[r];
    }
    return m;
  }

  /// Component of each dof (all cells around a dof lie in one component).
  std::vector<int> dof_component() const {
    std::vector<int> out(dof_count(), -1);
    for (int c = 0; c < cell_count(); ++c)
      for (int d : cell_dofs[c]) out[d] = component[c];
    return out;
  }

  /// Nodal displacement field sampled onto the dofs.
  std::vector<std::array<double, 2>> sample(const VectorField2D& w) const {
    std::vector<std::array<double, 2>> v(dof_count());
    for (int d = 0; d < dof_count(); ++d) v[d] = w[dof_node[d]];
    return v;
  }
};

namespace detail {

/// Rows of the cell-centred symmetrised gradient: (e11, sqrt2 e12, e22) per cell.
/// Unknowns interleave components: 2 d and 2 d + 1.
inline SparseMatrix strain_operator(const CrackMesh& m) {
  const double d = m.grid.delta();
  const double s2 = 1.0 / std::sqrt(2.0);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(m.cell_count()) * 16);
  // corner signs of d/dx and d/dy for corners 00, 10, 01, 11
  static constexpr double sx[4] = {-1, 1, -1, 1}, sy[4] = {-1, -1, 1, 1};
  for (int c = 0; c < m.cell_count(); ++c)
    for (int k = 0; k < 4; ++k) {
      const int dof = m.cell_dofs[c][k];
      const double ax = sx[k] / (2 * d), ay = sy[k] / (2 * d);
      t.emplace_back(3 * c, 2 * dof, ax);
      t.emplace_back(3 * c + 1, 2 * dof, s2 * ay);
      t.emplace_back(3 * c + 1, 2 * dof + 1, s2 * ax);
      t.emplace_back(3 * c + 2, 2 * dof + 1, ay);
    }
  SparseMatrix B(3 * m.cell_count(), 2 * m.dof_count());
  B.setFromTriplets(t.begin(), t.end());
  return B;
}

inline Eigen::VectorXd tensor_rows(const CellTensors& G) {
  Eigen::VectorXd g(3 * G.size());
  for (std::size_t c = 0; c < G.size(); ++c) {
    g[3 * c] = G[c].xx;
    g[3 * c + 1] = std::sqrt(2.0) * G[c].xy;
    g[3 * c + 2] = G[c].yy;
  }
  return g;
}

}  // namespace detail

/// e_h(v) per cell for a displacement given on the dofs.
inline CellTensors symmetric_gradient(const CrackMesh& m, const std::vector<std::array<double, 2>>& v) {
  Eigen::VectorXd x(2 * m.dof_count());
  for (int d = 0; d < m.dof_count(); ++d) {
    x[2 * d] = v[d][0];
    x[2 * d + 1] = v[d][1];
  }
  const Eigen::VectorXd r = detail::strain_operator(m) * x;
  CellTensors e(m.cell_count());
  for (int c = 0; c < m.cell_count(); ++c) e[c] = Sym2{r[3 * c], r[3 * c + 1] / std::sqrt(2.0), r[3 * c + 2]};
  return e;
}

/// sum over cells of |e_h(v) - G|^2 delta^2.
inline double dual_objective(const CrackMesh& m, const std::vector<std::array<double, 2>>& v, const CellTensors& G) {
  const auto e = symmetric_gradient(m, v);
  double s = 0.0;
  for (int c = 0; c < m.cell_count(); ++c) s += (e[c] - G[c]).norm2();
  return s * m.grid.cell_area();
}

struct ComponentGauge {
  int cells = 0;
  int dofs = 0;
  std::array<double, 2> removed_translation{};
  double removed_rotation = 0.0;
};

struct DualReport {
  double dual_value = 0.0;
  double gap_abs = 0.0;
  double gap_rel = 0.0;
  long iterations = 0;
  double residual_norm = 0.0;  // normal-equation residual, relative
  std::vector<ComponentGauge> gauge_info;
};

struct DualSolution {
  std::vector<std::array<double, 2>> v;
  DualReport report;
};

/// Removes the mean translation and the mean infinitesimal rotation of v on
/// every component, about the component's dof centroid.
inline std::vector<ComponentGauge> fix_gauge(const CrackMesh& m, std::vector<std::array<double, 2>>& v) {
  const auto comp = m.dof_component();
  std::vector<ComponentGauge> info(m.component_count);
  for (int c = 0; c < m.cell_count(); ++c) ++info[m.component[c]].cells;
  std::vector<std::array<double, 4>> acc(m.component_count, {0, 0, 0, 0});  // sum x, sum y, sum vx, sum vy
  for (int d = 0; d < m.dof_count(); ++d) {
    const auto p = m.grid.position(m.dof_node[d]);
    auto& a = acc[comp[d]];
    a[0] += p[0];
    a[1] += p[1];
    a[2] += v[d][0];
    a[3] += v[d][1];
    ++info[comp[d]].dofs;
  }
  for (int k = 0; k < m.component_count; ++k) {
    if (info[k].cells < 1 || info[k].dofs < 1) throw DegenerateComponent(k);
    info[k].removed_translation = {acc[k][2] / info[k].dofs, acc[k][3] / info[k].dofs};
  }
  std::vector<double> num(m.component_count, 0.0), den(m.component_count, 0.0);
  for (int d = 0; d < m.dof_count(); ++d) {
    const int k = comp[d];
    v[d][0] -= info[k].removed_translation[0];
    v[d][1] -= info[k].removed_translation[1];
    const auto p = m.grid.position(m.dof_node[d]);
    const double rx = -(p[1] - acc[k][1] / info[k].dofs), ry = p[0] - acc[k][0] / info[k].dofs;
    num[k] += v[d][0] * rx + v[d][1] * ry;
    den[k] += rx * rx + ry * ry;
  }
  for (int k = 0; k < m.component_count; ++k) info[k].removed_rotation = den[k] > 0 ? num[k] / den[k] : 0.0;
  for (int d = 0; d < m.dof_count(); ++d) {
    const int k = comp[d];
    const auto p = m.grid.position(m.dof_node[d]);
    const double w = info[k].removed_rotation;
    v[d][0] -= w * -(p[1] - acc[k][1] / info[k].dofs);
    v[d][1] -= w * (p[0] - acc[k][0] / info[k].dofs);
  }
  return info;
}

/// Least-squares fit of e_h(v) to G on the cracked grid, conjugate gradients on
/// the normal equations from a zero start.
inline DualSolution solve_dual(const CrackMesh& m, const CellTensors& G, double tol = 1e-10, long max_iter = 0) {
  if (static_cast<int>(G.size()) != m.cell_count()) throw ConfigError("dual load has the wrong number of cells");
  const SparseMatrix B = detail::strain_operator(m);
  const Eigen::VectorXd g = detail::tensor_rows(G);
  DualSolution out;
  out.v.assign(m.dof_count(), {0.0, 0.0});
  Eigen::VectorXd x = Eigen::VectorXd::Zero(B.cols());
  if (g.norm() > 0) {
    Eigen::LeastSquaresConjugateGradient<SparseMatrix> lscg;
    lscg.setTolerance(tol);
    lscg.setMaxIterations(max_iter > 0 ? max_iter : std::max<long>(1000, 20L * B.cols()));
    lscg.compute(B);
    x = lscg.solve(g);
    out.report.iterations = lscg.iterations();
    out.report.residual_norm = lscg.error();
    if (lscg.info() != Eigen::Success)
      throw NoConvergence("dual least squares", lscg.iterations(), lscg.error(),
                          std::vector<double>(x.data(), x.data() + x.size()));
  }
  for (int d = 0; d < m.dof_count(); ++d) out.v[d] = {x[2 * d], x[2 * d + 1]};
  out.report.gauge_info = fix_gauge(m, out.v);
  out.report.dual_value = dual_objective(m, out.v, G);
  return out;
}

inline DualSolution solve_dual(const CrackMesh& m, const TensorField2D& G, double tol = 1e-10) {
  return solve_dual(m, cell_average(G), tol);
}

struct GapResult {
  double gap_abs = 0.0;
  double gap_rel = 0.0;
};

inline GapResult duality_gap(double primal_compliance, const DualReport& r, double eps = 1e-300) {
  GapResult out;
  out.gap_abs = std::abs(r.dual_value - primal_compliance);
  out.gap_rel = out.gap_abs / std::max(std::abs(primal_compliance), eps);
  return out;
}

inline void record_gap(double primal_compliance, DualReport& r) {
  const auto gap = duality_gap(primal_compliance, r);
  r.gap_abs = gap.gap_abs;
  r.gap_rel = gap.gap_rel;
}

/// Dual value for (K, f): Poisson solve, G = phi Id, crack least squares.
inline DualSolution dual_for(const SupportGraph& K, const ScalarField2D& f) {
  return solve_dual(CrackMesh::build(K), build_G(solve_poisson(f)));
}

/// F(u, M) = 2 sum Hess u : M - sum |M|^2 - 2 sum u f, trapezoid weighted.
inline double saddle_functional(const SupportGraph& K, const ScalarField2D& u, const TensorField2D& M,
                                const ScalarField2D& f) {
  const Grid2D& g = u.grid();
  const auto H = hessian_field(u, K);
  double s = 0.0;
  for (int n = 0; n < g.size(); ++n) s += g.trapezoid_weight(n) * (2 * H[n].dot(M[n]) - M[n].norm2() - 2 * u[n] * f[n]);
  return s;
}

inline double tensor_energy(const TensorField2D& M) {
  double s = 0.0;
  for (int n = 0; n < M.size(); ++n) s += M.grid().trapezoid_weight(n) * M[n].norm2();
  return s;
}

struct SaddleReport {
  double F_star = 0.0;                 // F(u_K, M*)
  double reference = 0.0;              // -sum |M*|^2
  double max_increase_rel = 0.0;       // max over M of (F(u_K, M) - F_star) / |F_star|
  double max_drop_mismatch = 0.0;      // max |(F_star - F(u_K, M)) - sum |N|^2| / sum |N|^2
  double max_constancy_rel = 0.0;      // max over u of |F(u, M*) - reference| / |reference|
  double u_K_constancy_rel = 0.0;      // |F_star - reference| / |reference|
  int perturbation_trials = 0;
  int admissible_trials = 0;
};

/// Smooth random field vanishing with its gradient on the clamped set of K.
inline ScalarField2D random_admissible(const SupportGraph& K, std::mt19937_64& rng, double amplitude) {
  const Grid2D& g = K.grid();
  const auto dist = distance_to(K);
  const double shift = default_scheme(K) == ClampScheme::one_ring_hessian ? g.delta() : 0.0;
  const double rho = 0.1 * std::min(g.extent_x(), g.extent_y());
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> phase(0.0, 2 * 3.14159265358979323846);
  struct Mode {
    double a, kx, ky, px, py;
  };
  std::vector<Mode> modes;
  for (int kx = 1; kx <= 3; ++kx)
    for (int ky = 1; ky <= 3; ++ky)
      modes.push_back({nd(rng) / (kx * kx + ky * ky), double(kx), double(ky), phase(rng), phase(rng)});
  ScalarField2D u(g, 0.0);
  for (int n = 0; n < g.size(); ++n) {
    const double d = std::max(0.0, dist[n] - shift);
    const auto p = g.position(n);
    double s = 0.0;
    for (const auto& md : modes)
      s += md.a * std::cos(md.kx * 3.14159265358979323846 * p[0] / g.extent_x() + md.px) *
           std::cos(md.ky * 3.14159265358979323846 * p[1] / g.extent_y() + md.py);
    u[n] = s * d * d / (d * d + rho * rho);
  }
  const double mx = max_abs(u);
  if (mx > 0)
    for (auto& x : u.values()) x *= amplitude / mx;
  return u;
}

/// Checks that (u_K, Hess u_K) is a saddle point of F: random perturbations of
/// M never raise F, and F(., M*) is flat over admissible fields.
inline SaddleReport saddle_check(const SupportGraph& K, const ScalarField2D& u_K, const ScalarField2D& f, int trials,
                                 std::uint64_t seed, double perturbation = 0.1) {
  const Grid2D& g = u_K.grid();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const auto Mstar = hessian_field(u_K, K);
  SaddleReport r;
  r.F_star = saddle_functional(K, u_K, Mstar, f);
  r.reference = -tensor_energy(Mstar);
  r.u_K_constancy_rel = std::abs(r.F_star - r.reference) / std::abs(r.reference);
  const double mnorm = std::sqrt(tensor_energy(Mstar));
  for (int t = 0; t < trials; ++t) {
    TensorField2D N(g);
    for (auto& x : N.values()) x = Sym2{nd(rng), nd(rng), nd(rng)};
    const double scale = perturbation * mnorm / std::sqrt(tensor_energy(N));
    TensorField2D M(g);
    for (int n = 0; n < g.size(); ++n) {
      N[n] = N[n] * scale;
      M[n] = Mstar[n] + N[n];
    }
    const double F = saddle_functional(K, u_K, M, f);
    const double nn = tensor_energy(N);
    r.max_increase_rel = std::max(r.max_increase_rel, (F - r.F_star) / std::abs(r.F_star));
    r.max_drop_mismatch = std::max(r.max_drop_mismatch, std::abs((r.F_star - F) - nn) / nn);
    ++r.perturbation_trials;
  }
  const double amp = max_abs(u_K);
  for (int t = 0; t < trials; ++t) {
    const auto u = random_admissible(K, rng, amp);
    const double F = saddle_functional(K, u, Mstar, f);
    r.max_constancy_rel = std::max(r.max_constancy_rel, std::abs(F - r.reference) / std::abs(r.reference));
    ++r.admissible_trials;
  }
  return r;
}

}  // namespace plate_support
