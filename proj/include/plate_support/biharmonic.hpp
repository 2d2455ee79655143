#pragma once

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "plate_support/errors.hpp"
#include "plate_support/grid.hpp"
#include "plate_support/support_graph.hpp"

namespace plate_support {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// How the clamped condition u = grad u = 0 on K is imposed.
enum class ClampScheme {
  /// u = 0 on K's nodes; the normal-derivative condition enters through
  /// ghost-reflected Laplacian rows, one per cell sector around each node of K.
  /// Second-order accurate. Used when the perimeter belongs to K.
  sector_ghost,
  /// u = 0 on clamp_set(K) (K plus one-ring) with the full Hessian energy.
  /// Used when the perimeter is free, where |Lap u|^2 no longer integrates
  /// to |Hess u|^2.
  one_ring_hessian,
};

/// Linear system of the clamped discrete biharmonic problem restricted to free nodes.
struct BiharmonicSystem {
  Grid2D grid;
  ClampScheme scheme = ClampScheme::sector_ghost;
  std::vector<int> free_nodes;
  std::vector<int> free_slot;  // node -> position in free_nodes, -1 when clamped
  SparseMatrix op;             // delta^2 * L^T W L on free nodes (SPD)
  Eigen::VectorXd rhs;         // trapezoid-weighted f on free nodes (delta^2 f away from the rim)

  int free_count() const { return static_cast<int>(free_nodes.size()); }
  bool is_free(int node) const { return free_slot[node] >= 0; }

  Eigen::VectorXd restrict_to_free(const ScalarField2D& u) const {
    Eigen::VectorXd x(free_count());
    for (int k = 0; k < free_count(); ++k) x[k] = u[free_nodes[k]];
    return x;
  }
  ScalarField2D extend(const Eigen::VectorXd& x) const {
    ScalarField2D u(grid, 0.0);
    for (int k = 0; k < free_count(); ++k) u[free_nodes[k]] = x[k];
    return u;
  }
};

struct SolveReport {
  long iterations = 0;
  double residual_norm = 0.0;  // relative: |A u - b| / |b|
  double compliance = 0.0;      // sum u f w, w the trapezoid weight
  double hessian_energy = 0.0;  // u . (A u)
};

namespace detail {

struct WeightedRows {
  std::vector<Eigen::Triplet<double>> entries;  // (row, node, coefficient)
  std::vector<double> weights;
  int add_row(double w) {
    weights.push_back(w);
    return static_cast<int>(weights.size()) - 1;
  }
};

inline void laplacian_sector_rows(const SupportGraph& K, WeightedRows& rows) {
  const auto& g = K.grid();
  const double inv = 1.0 / (g.delta() * g.delta());
  static constexpr int ri[4] = {1, 0, -1, 0};
  static constexpr int rj[4] = {0, 1, 0, -1};
  for (int n = 0; n < g.size(); ++n) {
    const auto p = g.ij(n);
    if (!K.has_node(n)) {
      const bool interior = p.i > 0 && p.j > 0 && p.i < g.nx() - 1 && p.j < g.ny() - 1;
      if (!interior) continue;
      const int r = rows.add_row(1.0);
      rows.entries.emplace_back(r, n, -4.0 * inv);
      g.for_each_neighbor(n, [&](int m) { rows.entries.emplace_back(r, m, inv); });
      continue;
    }
    for (const auto& sector : node_sectors(K, n)) {
      const int r = rows.add_row(static_cast<double>(sector.quadrants.size()) / 4.0);
      for (int axis = 0; axis < 2; ++axis) {
        const int plus = axis, minus = axis + 2;
        const bool hp = sector.rays[plus], hm = sector.rays[minus];
        for (int ray : {plus, minus}) {
          if (!sector.rays[ray]) continue;
          const double c = (hp && hm) ? inv : 2.0 * inv;
          rows.entries.emplace_back(r, g.index(p.i + ri[ray], p.j + rj[ray]), c);
        }
      }
    }
  }
}

inline void hessian_rows(const Grid2D& g, WeightedRows& rows) {
  const double inv = 1.0 / (g.delta() * g.delta());
  for (int j = 0; j < g.ny(); ++j) {
    const double wy = (j == 0 || j == g.ny() - 1) ? 0.5 : 1.0;
    for (int i = 1; i + 1 < g.nx(); ++i) {
      const int r = rows.add_row(wy);
      rows.entries.emplace_back(r, g.index(i - 1, j), inv);
      rows.entries.emplace_back(r, g.index(i, j), -2.0 * inv);
      rows.entries.emplace_back(r, g.index(i + 1, j), inv);
    }
  }
  for (int i = 0; i < g.nx(); ++i) {
    const double wx = (i == 0 || i == g.nx() - 1) ? 0.5 : 1.0;
    for (int j = 1; j + 1 < g.ny(); ++j) {
      const int r = rows.add_row(wx);
      rows.entries.emplace_back(r, g.index(i, j - 1), inv);
      rows.entries.emplace_back(r, g.index(i, j), -2.0 * inv);
      rows.entries.emplace_back(r, g.index(i, j + 1), inv);
    }
  }
  // mixed derivative at cell centres, counted twice in |Hess u|^2
  for (int j = 0; j + 1 < g.ny(); ++j)
    for (int i = 0; i + 1 < g.nx(); ++i) {
      const int r = rows.add_row(2.0);
      rows.entries.emplace_back(r, g.index(i + 1, j + 1), inv);
      rows.entries.emplace_back(r, g.index(i, j + 1), -inv);
      rows.entries.emplace_back(r, g.index(i + 1, j), -inv);
      rows.entries.emplace_back(r, g.index(i, j), inv);
    }
}

}  // namespace detail

inline ClampScheme default_scheme(const SupportGraph& K) {
  return K.include_boundary() ? ClampScheme::sector_ghost : ClampScheme::one_ring_hessian;
}

/// Builds the discrete minimisation problem
///   min 1/2 sum w |L u|^2 delta^2 - sum u f w_n  over u clamped on K.
inline BiharmonicSystem assemble(const SupportGraph& K, const ScalarField2D& f,
                                 std::optional<ClampScheme> scheme = std::nullopt) {
  const Grid2D& g = K.grid();
  if (!g.same_shape(f.grid())) throw ConfigError("load field grid differs from support grid");
  BiharmonicSystem sys{g};
  sys.scheme = scheme.value_or(default_scheme(K));

  std::vector<int> clamped = sys.scheme == ClampScheme::sector_ghost ? K.nodes() : clamp_set(K);
  if (clamped.empty()) throw EmptyClampSet();
  sys.free_slot.assign(g.size(), -1);
  for (int n = 0, c = 0; n < g.size(); ++n) {
    while (c < static_cast<int>(clamped.size()) && clamped[c] < n) ++c;
    if (c < static_cast<int>(clamped.size()) && clamped[c] == n) continue;
    sys.free_slot[n] = static_cast<int>(sys.free_nodes.size());
    sys.free_nodes.push_back(n);
  }

  detail::WeightedRows rows;
  if (sys.scheme == ClampScheme::sector_ghost)
    detail::laplacian_sector_rows(K, rows);
  else
    detail::hessian_rows(g, rows);

  std::vector<Eigen::Triplet<double>> trip;
  for (const auto& t : rows.entries) {
    const int slot = sys.free_slot[t.col()];
    if (slot >= 0) trip.emplace_back(t.row(), slot, t.value());
  }
  SparseMatrix L(static_cast<int>(rows.weights.size()), sys.free_count());
  L.setFromTriplets(trip.begin(), trip.end());
  Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(rows.weights.data(), rows.weights.size());
  sys.op = SparseMatrix(L.transpose() * w.asDiagonal() * L) * g.cell_area();
  sys.op.makeCompressed();

  sys.rhs.resize(sys.free_count());
  // the load uses the same rim-halved weights as the energy rows, so a free
  // edge carries no spurious extra load
  for (int k = 0; k < sys.free_count(); ++k) sys.rhs[k] = f[sys.free_nodes[k]] * g.trapezoid_weight(sys.free_nodes[k]);
  return sys;
}

inline long default_max_iter(int free_count) {
  return std::max<long>(100, static_cast<long>(500.0 * std::sqrt(static_cast<double>(free_count))));
}

/// Conjugate gradients preconditioned by incomplete Cholesky, to |A x - b| <= tol |b|.
/// Runs in chunks and re-checks the true residual after each; the best iterate
/// seen is kept, and three chunks without improvement count as stagnation
/// (the round-off floor of the double iterate has been reached).
inline Eigen::VectorXd pcg_solve(const SparseMatrix& A, const Eigen::VectorXd& b, double tol, long max_iter,
                                 const Eigen::VectorXd* guess, long& iterations, double& residual,
                                 const char* name = "conjugate gradients") {
  iterations = 0;
  residual = 0.0;
  const double bnorm = b.norm();
  if (bnorm == 0.0) return Eigen::VectorXd::Zero(b.size());
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower, Eigen::IncompleteCholesky<double, Eigen::Lower, Eigen::AMDOrdering<int>>> cg;
  cg.compute(A);
  Eigen::VectorXd x = guess ? *guess : Eigen::VectorXd::Zero(b.size());
  residual = (A * x - b).norm() / bnorm;
  Eigen::VectorXd best = x;
  double best_res = residual;
  const long chunk = std::max<long>(100, static_cast<long>(20.0 * std::sqrt(static_cast<double>(b.size()))));
  int stalled = 0;
  while (best_res > tol && iterations < max_iter && stalled < 3) {
    cg.setMaxIterations(std::min(chunk, max_iter - iterations));
    // aim below tol so the explicit residual check passes
    cg.setTolerance(tol * 0.5);
    x = cg.solveWithGuess(b, x);
    iterations += std::max<long>(1, cg.iterations());
    const double r = (A * x - b).norm() / bnorm;
    if (r < best_res) {
      stalled = r < 0.9 * best_res ? 0 : stalled + 1;
      best_res = r;
      best = x;
    } else {
      ++stalled;
      x = best;
    }
  }
  residual = best_res;
  if (residual > tol)
    throw NoConvergence(name, iterations, residual, std::vector<double>(best.data(), best.data() + best.size()));
  return best;
}

struct SolveOptions {
  double tol = 1e-10;
  long max_iter = 0;  // 0: default_max_iter(free count)
  const ScalarField2D* warm_start = nullptr;
};

inline std::pair<ScalarField2D, SolveReport> solve(const BiharmonicSystem& sys, const SolveOptions& opt = {}) {
  if (!(opt.tol > 0.0)) throw ConfigError("solver tolerance must be positive");
  SolveReport rep;
  if (sys.free_count() == 0) return {ScalarField2D(sys.grid, 0.0), rep};
  const long max_iter = opt.max_iter > 0 ? opt.max_iter : default_max_iter(sys.free_count());
  Eigen::VectorXd guess;
  if (opt.warm_start) guess = sys.restrict_to_free(*opt.warm_start);
  Eigen::VectorXd x;
  try {
    x = pcg_solve(sys.op, sys.rhs, opt.tol, max_iter, opt.warm_start ? &guess : nullptr, rep.iterations,
                  rep.residual_norm, "biharmonic PCG");
  } catch (const NoConvergence& e) {
    // report the best iterate as a full nodal field
    const Eigen::VectorXd best = Eigen::Map<const Eigen::VectorXd>(e.best_iterate().data(), e.best_iterate().size());
    const auto field = sys.extend(best);
    throw NoConvergence("biharmonic PCG", e.iterations(), e.residual(), field.values());
  }
  rep.compliance = x.dot(sys.rhs);
  rep.hessian_energy = x.dot(sys.op * x);
  return {sys.extend(x), rep};
}

/// Dense LDL^T solve; the reference oracle for small grids.
inline std::pair<ScalarField2D, SolveReport> solve_dense(const BiharmonicSystem& sys) {
  SolveReport rep;
  if (sys.free_count() == 0) return {ScalarField2D(sys.grid, 0.0), rep};
  const Eigen::MatrixXd A(sys.op);
  const Eigen::VectorXd x = A.ldlt().solve(sys.rhs);
  rep.residual_norm = sys.rhs.norm() > 0 ? (A * x - sys.rhs).norm() / sys.rhs.norm() : 0.0;
  rep.compliance = x.dot(sys.rhs);
  rep.hessian_energy = x.dot(A * x);
  return {sys.extend(x), rep};
}

/// Discrete plate energy 1/2 u.(A u) - u.rhs for a field clamped like sys.
inline double plate_energy(const BiharmonicSystem& sys, const ScalarField2D& u) {
  const Eigen::VectorXd x = sys.restrict_to_free(u);
  return 0.5 * x.dot(sys.op * x) - x.dot(sys.rhs);
}

/// Relative mismatch between sum u f w and the energy form u.(A u).
inline double compliance_identity_check(const ScalarField2D& u, const ScalarField2D& f, const BiharmonicSystem& sys,
                                        double eps = 1e-300) {
  const Eigen::VectorXd x = sys.restrict_to_free(u);
  const double work = trapezoid_inner(u, f);
  const double energy = x.dot(sys.op * x);
  return std::abs(work - energy) / std::max(std::abs(work), eps);
}

namespace detail {

// clamped: optional per-node flag; clamped nodes get zero slope and
// ghost-reflected second differences where a neighbour is missing.
inline TensorField2D hessian_impl(const ScalarField2D& u, const std::vector<char>* clamped) {
  const Grid2D& g = u.grid();
  const int nx = g.nx(), ny = g.ny();
  const double d = g.delta();
  auto is_clamped = [&](int i, int j) { return clamped && (*clamped)[g.index(i, j)]; };
  auto first = [&](const std::vector<double>& v, int i, int j, bool along_x) {
    const int n = along_x ? nx : ny;
    const int k = along_x ? i : j;
    auto at = [&](int kk) { return along_x ? v[g.index(kk, j)] : v[g.index(i, kk)]; };
    // mirror image across a clamped rim: the normal slope of any field vanishes
    if ((k == 0 || k == n - 1) && is_clamped(i, j)) return 0.0;
    if (k == 0) return (at(1) - at(0)) / d;
    if (k == n - 1) return (at(n - 1) - at(n - 2)) / d;
    return (at(k + 1) - at(k - 1)) / (2 * d);
  };
  auto second = [&](int i, int j, bool along_x) {
    const int n = along_x ? nx : ny;
    const int k0 = along_x ? i : j;
    auto at = [&](int kk) { return along_x ? u.at(kk, j) : u.at(i, kk); };
    if (is_clamped(i, j) && (k0 == 0 || k0 == n - 1)) {
      const int inner = k0 == 0 ? 1 : n - 2;
      return 2 * (at(inner) - at(k0)) / (d * d);
    }
    const int k = std::clamp(k0, 1, n - 2);
    return (at(k + 1) - 2 * at(k) + at(k - 1)) / (d * d);
  };
  std::vector<double> ux(g.size()), uy(g.size());
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const bool c = is_clamped(i, j);
      ux[g.index(i, j)] = c ? 0.0 : first(u.values(), i, j, true);
      uy[g.index(i, j)] = c ? 0.0 : first(u.values(), i, j, false);
    }
  TensorField2D H(g);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const double uxy = 0.5 * (first(uy, i, j, true) + first(ux, i, j, false));
      H.at(i, j) = Sym2{second(i, j, true), uxy, second(i, j, false)};
    }
  return H;
}

}  // namespace detail

/// Second differences (u_xx, u_xy, u_yy): centred inside, one-sided on the rim.
inline TensorField2D hessian_field(const ScalarField2D& u) { return detail::hessian_impl(u, nullptr); }

/// Hessian of a field clamped on K: zero slope on K's nodes and mirrored
/// second differences where K meets the rim.
inline TensorField2D hessian_field(const ScalarField2D& u, const SupportGraph& K) {
  std::vector<char> clamped(u.grid().size(), 0);
  for (int n : K.nodes()) clamped[n] = 1;
  return detail::hessian_impl(u, &clamped);
}

/// Discrete H^2 seminorm sqrt(sum |Hess_h (a - b)|^2 delta^2).
inline double h2_seminorm_distance(const ScalarField2D& a, const ScalarField2D& b) {
  ScalarField2D diff(a.grid());
  for (int n = 0; n < a.size(); ++n) diff[n] = a[n] - b[n];
  const auto H = hessian_field(diff);
  double s = 0.0;
  for (const auto& t : H.values()) s += t.norm2();
  return std::sqrt(s * a.grid().cell_area());
}

/// Convenience: clamped solution and report for (K, f).
inline std::pair<ScalarField2D, SolveReport> solve_plate(const SupportGraph& K, const ScalarField2D& f,
                                                         const SolveOptions& opt = {}) {
  return solve(assemble(K, f), opt);
}

}  // namespace plate_support
