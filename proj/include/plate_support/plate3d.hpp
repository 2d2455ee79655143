#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "plate_support/biharmonic.hpp"
#include "plate_support/errors.hpp"
#include "plate_support/rotation.hpp"
#include "plate_support/support_graph.hpp"

namespace plate_support {

using Vec3 = std::array<double, 3>;

/// Deformation of the slab (footprint) x (-h/2, h/2), sampled on nz layers.
/// Layer k sits at s_k = -1/2 + k / (nz - 1); the bottom layer k = 0 carries
/// the glue. Node (i, j, k) is stored at (k * ny + j) * nx + i.
struct Plate3DState {
  Grid2D grid;
  double h = 0.0;
  int nz = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<Vec3> y;
  std::vector<int> glued;  // footprint nodes pinned to the identity on the bottom layer

  Plate3DState(Grid2D g, double h_, int nz_, double alpha_)
      : grid(std::move(g)), h(h_), nz(nz_), alpha(alpha_), beta(2 * alpha_ - 2) {
    if (!(h > 0.0)) throw ConfigError("plate thickness h must be > 0");
    if (nz < 2) throw ConfigError("plate needs at least 2 layers");
    y.resize(static_cast<std::size_t>(grid.size()) * nz);
    for (int k = 0; k < nz; ++k)
      for (int n = 0; n < grid.size(); ++n) y[index(n, k)] = reference(n, k);
  }

  static Plate3DState identity(const Grid2D& g, double h, int nz, double alpha) { return Plate3DState(g, h, nz, alpha); }

  std::size_t index(int node, int k) const { return static_cast<std::size_t>(k) * grid.size() + node; }
  double s(int k) const { return -0.5 + static_cast<double>(k) / (nz - 1); }
  double dz() const { return h / (nz - 1); }
  Vec3 reference(int node, int k) const {
    const auto p = grid.position(node);
    return {p[0], p[1], h * s(k)};
  }
  /// Trapezoid weight of layer k for averages over s in (-1/2, 1/2).
  double layer_weight(int k) const { return (k == 0 || k == nz - 1 ? 0.5 : 1.0) / (nz - 1); }

  void validate() const {
    if (beta != 2 * alpha - 2) throw ConfigError("beta must equal 2 alpha - 2");
    if (y.size() != static_cast<std::size_t>(grid.size()) * nz) throw ConfigError("deformation size mismatch");
  }
};

/// max |y - id| over the glued bottom nodes.
inline double glue_violation(const Plate3DState& st) {
  double m = 0.0;
  for (int n : st.glued) {
    const auto& v = st.y[st.index(n, 0)];
    const auto r = st.reference(n, 0);
    for (int c = 0; c < 3; ++c) m = std::max(m, std::abs(v[c] - r[c]));
  }
  return m;
}

namespace detail {

/// Trilinear-cell gradient at the cell centre: each column averages the four
/// parallel edge differences.
inline Eigen::Matrix3d cell_gradient(const std::vector<Vec3>& y, int nx, int ny, int i, int j, int k, double dx,
                                     double dy, double dz) {
  auto at = [&](int a, int b, int c) -> const Vec3& {
    return y[(static_cast<std::size_t>(c) * ny + b) * nx + a];
  };
  Eigen::Matrix3d F = Eigen::Matrix3d::Zero();
  for (int p = 0; p < 2; ++p)
    for (int q = 0; q < 2; ++q)
      for (int r = 0; r < 3; ++r) {
        F(r, 0) += at(i + 1, j + p, k + q)[r] - at(i, j + p, k + q)[r];
        F(r, 1) += at(i + p, j + 1, k + q)[r] - at(i + p, j, k + q)[r];
        F(r, 2) += at(i + p, j + q, k + 1)[r] - at(i + p, j + q, k)[r];
      }
  F.col(0) /= 4 * dx;
  F.col(1) /= 4 * dy;
  F.col(2) /= 4 * dz;
  return F;
}

/// Sum of fn(F) over all cells of an nx x ny x nz node block. Cells are split
/// into contiguous layer slabs per thread and the partial sums added in order.
template <class Fn>
double sum_over_cells(const std::vector<Vec3>& y, int nx, int ny, int nz, double dx, double dy, double dz, Fn fn,
                      int threads = 1) {
  const int layers = nz - 1;
  threads = std::clamp(threads, 1, std::max(1, layers));
  std::vector<double> partial(threads, 0.0);
  auto work = [&](int t) {
    const int k0 = layers * t / threads, k1 = layers * (t + 1) / threads;
    double s = 0.0;
    for (int k = k0; k < k1; ++k)
      for (int j = 0; j + 1 < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i) s += fn(cell_gradient(y, nx, ny, i, j, k, dx, dy, dz));
    partial[t] = s;
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  double total = 0.0;
  for (double s : partial) total += s;
  return total;
}

inline double quintic_step(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * t * (10 - 15 * t + 6 * t * t);
}

/// Nodal gradient: centred inside, one-sided on the rim, zero on clamped nodes.
inline VectorField2D clamped_gradient(const ScalarField2D& u, const std::vector<char>& clamped) {
  const Grid2D& g = u.grid();
  const double d = g.delta();
  VectorField2D out(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const int n = g.index(i, j);
      if (clamped[n]) continue;
      auto diff = [&](int a0, int a1, int b0, int b1, double span) { return (u.at(a1, b1) - u.at(a0, b0)) / span; };
      const int il = std::max(i - 1, 0), ir = std::min(i + 1, g.nx() - 1);
      const int jl = std::max(j - 1, 0), jr = std::min(j + 1, g.ny() - 1);
      out[n] = {diff(il, ir, j, j, (ir - il) * d), diff(i, i, jl, jr, (jr - jl) * d)};
    }
  return out;
}

}  // namespace detail

/// E^h(y) = (1/h) int 1/2 dist^2(grad y, SO(3)), one point per trilinear cell.
inline double energy_Eh(const Plate3DState& st, int threads = 1) {
  st.validate();
  const auto& g = st.grid;
  const double sum = detail::sum_over_cells(st.y, g.nx(), g.ny(), st.nz, g.delta(), g.delta(), st.dz(),
                                            [](const Eigen::Matrix3d& F) { return elastic_density(F); }, threads);
  // cell volume delta^2 dz, divided by h
  return sum * g.cell_area() * st.dz() / st.h;
}

struct EnergyBreakdown {
  double elastic = 0.0;  // E^h(y)
  double load = 0.0;     // (1/h) int f^h . y with f^h = (0, 0, h^alpha f)
  double total = 0.0;    // J^h = elastic - load
  double scaled = 0.0;   // total / h^beta
};

inline EnergyBreakdown energy_breakdown(const Plate3DState& st, const ScalarField2D& f, int threads = 1) {
  if (!st.grid.same_shape(f.grid())) throw ConfigError("load field grid differs from the plate footprint");
  EnergyBreakdown e;
  e.elastic = energy_Eh(st, threads);
  double s = 0.0;
  for (int n = 0; n < st.grid.size(); ++n) {
    double avg = 0.0;
    for (int k = 0; k < st.nz; ++k) avg += st.layer_weight(k) * st.y[st.index(n, k)][2];
    s += f[n] * avg * st.grid.trapezoid_weight(n);
  }
  e.load = std::pow(st.h, st.alpha) * s;
  e.total = e.elastic - e.load;
  e.scaled = e.total / std::pow(st.h, st.beta);
  return e;
}

/// The state R y + t for a fixed rotation: same energy.
inline Plate3DState rotated(const Plate3DState& st, const Eigen::Matrix3d& R, const Eigen::Vector3d& t = Eigen::Vector3d::Zero()) {
  Plate3DState out = st;
  for (auto& v : out.y) {
    const Eigen::Vector3d r = R * Eigen::Vector3d(v[0], v[1], v[2]) + t;
    v = {r[0], r[1], r[2]};
  }
  return out;
}

enum class GlueStrategy {
  pre_clamped,   // u, w already vanish (with slope) on K ∪ K_h
  smooth_cutoff  // multiply by a quintic cutoff vanishing on dilate(K, 2h), ramp 4h
};

inline const char* glue_name(GlueStrategy s) { return s == GlueStrategy::pre_clamped ? "pre_clamped" : "smooth_cutoff"; }

/// K together with the glue footprint K_h = {dist(x', K) < h}, with K's rim flag.
inline SupportGraph glue_support(const SupportGraph& K, double h) {
  const auto& g = K.grid();
  auto nodes = dilate(K, h);
  nodes.insert(nodes.end(), K.nodes().begin(), K.nodes().end());
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  const auto lattice = induced_support(g, nodes);
  auto edges = lattice.edges();
  edges.insert(edges.end(), K.edges().begin(), K.edges().end());
  return SupportGraph(g, nodes, edges, K.include_boundary());
}

struct RecoveryOptions {
  int nz = 9;
  GlueStrategy strategy = GlueStrategy::pre_clamped;
};

/// Kirchhoff-Love recovery state
///   y = (x' + h^{a-1} (w - s grad u), h s + h^{a-2} u),  s in (-1/2, 1/2).
/// With W = 1/2 dist^2 the linearised energy is |sym F|^2 (mu = 1/2, lambda = 0),
/// so the pointwise optimal quadratic correction g vanishes.
inline Plate3DState recovery_sequence(const ScalarField2D& u, const VectorField2D& w, double h, double alpha,
                                      const SupportGraph& K, const RecoveryOptions& opt = {}) {
  const Grid2D& g = u.grid();
  if (!g.same_shape(w.grid()) || !g.same_shape(K.grid())) throw ConfigError("recovery fields and K use different grids");
  Plate3DState st(g, h, opt.nz, alpha);
  st.glued = dilate(K, h);
  {
    auto all = st.glued;
    all.insert(all.end(), K.nodes().begin(), K.nodes().end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    st.glued = std::move(all);
  }
  std::vector<char> clamped(g.size(), 0);
  for (int n : st.glued) clamped[n] = 1;

  ScalarField2D uu = u;
  VectorField2D ww = w;
  if (opt.strategy == GlueStrategy::smooth_cutoff) {
    if (6 * h > std::min(g.extent_x(), g.extent_y())) throw CutoffTooWide(h);
    const auto d = distance_to(K);
    for (int n = 0; n < g.size(); ++n) {
      const double chi = detail::quintic_step((d[n] - 2 * h) / (4 * h));
      uu[n] *= chi;
      ww[n] = {ww[n][0] * chi, ww[n][1] * chi};
    }
  } else {
    for (int n : st.glued)
      if (u[n] != 0.0 || w[n][0] != 0.0 || w[n][1] != 0.0)
        throw ConfigError("pre_clamped recovery needs u = w = 0 on K and K_h");
  }
  const auto grad = detail::clamped_gradient(uu, clamped);
  const double a1 = std::pow(h, alpha - 1), a2 = std::pow(h, alpha - 2);
  for (int k = 0; k < st.nz; ++k) {
    const double s = st.s(k);
    for (int n = 0; n < g.size(); ++n) {
      const auto p = g.position(n);
      const bool pin = clamped[n];
      st.y[st.index(n, k)] = {p[0] + (pin ? 0.0 : a1 * (ww[n][0] - s * grad[n][0])),
                              p[1] + (pin ? 0.0 : a1 * (ww[n][1] - s * grad[n][1])), h * s + a2 * uu[n]};
    }
  }
  return st;
}

/// Scaled layer averages
///   u_h = h^{-(beta/2 - 1)} avg_s (y_3 - h s),  w_h = h^{-delta} avg_s (y' - x'),
/// delta = min(beta - 2, beta / 2), trapezoid rule in s.
inline std::pair<ScalarField2D, VectorField2D> extract_displacements(const Plate3DState& st) {
  st.validate();
  const auto& g = st.grid;
  ScalarField2D u(g);
  VectorField2D w(g);
  const double su = std::pow(st.h, -(st.beta / 2 - 1));
  const double sw = std::pow(st.h, -std::min(st.beta - 2, st.beta / 2));
  for (int n = 0; n < g.size(); ++n) {
    double a3 = 0.0, a1 = 0.0, a2 = 0.0;
    for (int k = 0; k < st.nz; ++k) {
      const double wk = st.layer_weight(k);
      const auto& v = st.y[st.index(n, k)];
      const auto r = st.reference(n, k);
      a1 += wk * (v[0] - r[0]);
      a2 += wk * (v[1] - r[1]);
      a3 += wk * (v[2] - r[2]);
    }
    u[n] = su * a3;
    w[n] = {sw * a1, sw * a2};
  }
  return {u, w};
}

struct GammaRow {
  double h = 0.0;
  EnergyBreakdown energy;
  double gap_abs = 0.0;  // |scaled - I(u)|
  double gap_rel = 0.0;  // gap_abs / |I(u)|, or gap_abs when I(u) = 0
  double glue_violation = 0.0;
  double u_h_distance = 0.0;  // discrete L2 distance of extracted u_h to u
  double w_h_norm = 0.0;
  std::size_t glued_nodes = 0;
};

struct GammaReport {
  double alpha = 0.0;
  double beta = 0.0;
  double limit_value = 0.0;  // I(u) = sum (1/24 |Hess u|^2 - u f) delta^2
  double compliance = 0.0;   // of the unit-weight problem, I(u) = -6 compliance
  std::string convention;
  std::string strategy;
  std::vector<GammaRow> rows;
};

struct GammaOptions {
  int nz = 9;
  GlueStrategy strategy = GlueStrategy::pre_clamped;
  double solver_tol = 1e-9;  // 1e-10 is below the round-off floor on 129^2 footprints
  int threads = 1;
};

/// Recovery ladder against the limit I(u) = int 1/24 |Hess u|^2 - u f.
/// Its minimiser solves (1/12) Lap^2 u = f, i.e. u = 12 u_K with u_K from the
/// unit-weight plate problem.
inline GammaReport gamma_limit_experiment(const SupportGraph& K, const ScalarField2D& f, double alpha,
                                          const std::vector<double>& ladder, const GammaOptions& opt = {}) {
  if (!(alpha > 3.0)) throw ConfigError("alpha must exceed 3 (beta > 4) for the biharmonic limit");
  if (ladder.empty()) throw ConfigError("h ladder is empty");
  for (double h : ladder)
    if (!(h > 0.0)) throw ConfigError("ladder thicknesses must be > 0");
  const Grid2D& g = K.grid();
  SolveOptions so;
  so.tol = opt.solver_tol;
  GammaReport rep;
  rep.alpha = alpha;
  rep.beta = 2 * alpha - 2;
  rep.strategy = glue_name(opt.strategy);
  rep.convention = "u = 12 u_K (limit weight 1/24); I(u) = -6 compliance(K); thickness centred, s in (-1/2, 1/2)";

  auto scaled_solution = [&](const SupportGraph& S, SolveReport* r) {
    auto [v, sr] = solve_plate(S, f, so);
    for (auto& x : v.values()) x *= 12.0;
    if (r) *r = sr;
    return v;
  };
  SolveReport base;
  const auto u = scaled_solution(K, &base);
  rep.compliance = base.compliance;
  rep.limit_value = 6.0 * base.hessian_energy - 12.0 * base.compliance;

  const VectorField2D zero_w(g);
  for (double h : ladder) {
    RecoveryOptions ro{opt.nz, opt.strategy};
    const ScalarField2D uh = opt.strategy == GlueStrategy::pre_clamped ? scaled_solution(glue_support(K, h), nullptr) : u;
    const auto st = recovery_sequence(uh, zero_w, h, alpha, K, ro);
    GammaRow row;
    row.h = h;
    row.energy = energy_breakdown(st, f, opt.threads);
    row.gap_abs = std::abs(row.energy.scaled - rep.limit_value);
    row.gap_rel = rep.limit_value != 0.0 ? row.gap_abs / std::abs(rep.limit_value) : row.gap_abs;
    row.glue_violation = glue_violation(st);
    row.glued_nodes = st.glued.size();
    const auto [ue, we] = extract_displacements(st);
    ScalarField2D diff(g);
    for (int n = 0; n < g.size(); ++n) diff[n] = ue[n] - u[n];
    row.u_h_distance = l2_norm(diff);
    double wn = 0.0;
    for (const auto& v : we.values()) wn += v[0] * v[0] + v[1] * v[1];
    row.w_h_norm = std::sqrt(wn * g.cell_area());
    rep.rows.push_back(row);
  }
  return rep;
}

/// J^h(identity) in the centred frame: the load of the reference slab.
inline EnergyBreakdown identity_energy(const Grid2D& g, const ScalarField2D& f, double h, double alpha, int nz = 9) {
  return energy_breakdown(Plate3DState::identity(g, h, nz, alpha), f);
}

// ---------------------------------------------------------------------------
// Rigidity near a glued patch

struct RigidityReport {
  std::vector<double> ratios;       // |grad y - Id|^2 / |dist(grad y, SO(3))|^2 per trial
  std::vector<double> linearized;   // |grad z|^2 / |sym grad z|^2 for the same perturbation
  double max_ratio = 0.0;
  double max_linearized = 0.0;
  int excluded = 0;  // 0/0 trials
};

/// Nodes of the unit cube, n per axis, stored like Plate3DState.
struct CubeGrid {
  int n = 0;
  double spacing() const { return 1.0 / (n - 1); }
  std::size_t size() const { return static_cast<std::size_t>(n) * n * n; }
  std::size_t index(int i, int j, int k) const { return (static_cast<std::size_t>(k) * n + j) * n + i; }
  Vec3 position(int i, int j, int k) const { return {i * spacing(), j * spacing(), k * spacing()}; }
};

/// Ratio |grad y - Id|^2 / |dist(grad y, SO(3))|^2 over the cube; empty when both vanish.
inline std::optional<double> rigidity_ratio(const CubeGrid& cube, const std::vector<Vec3>& y) {
  const double d = cube.spacing();
  const double num = detail::sum_over_cells(y, cube.n, cube.n, cube.n, d, d, d, [](const Eigen::Matrix3d& F) {
    return (F - Eigen::Matrix3d::Identity()).squaredNorm();
  });
  const double den = detail::sum_over_cells(y, cube.n, cube.n, cube.n, d, d, d, [](const Eigen::Matrix3d& F) {
    const double s = dist_SO3(F).distance;
    return s * s;
  });
  if (num == 0.0 && den == 0.0) return std::nullopt;
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}

/// Random smooth perturbations z vanishing on the disc of radius r0 centred on
/// the bottom face; y = x + eps z. Reports the worst ratio over the trials.
inline RigidityReport rigidity_probe(const CubeGrid& cube, double patch_radius, int trials, std::uint64_t seed,
                                     double eps = 1e-3) {
  if (cube.n < 3) throw ConfigError("rigidity cube needs at least 3 nodes per axis");
  if (!(patch_radius > 0.0)) throw ConfigError("patch radius must be > 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> amp(-1.0, 1.0), phase(0.0, 2 * 3.14159265358979323846);
  std::uniform_int_distribution<int> freq(0, 2);
  const double d = cube.spacing();
  RigidityReport rep;
  for (int t = 0; t < trials; ++t) {
    struct Mode {
      int c, p, q, r;
      double a, ph;
    };
    std::vector<Mode> modes;
    for (int m = 0; m < 9; ++m) modes.push_back({m % 3, freq(rng), freq(rng), freq(rng), amp(rng), phase(rng)});
    std::vector<Vec3> z(cube.size()), y(cube.size());
    for (int k = 0; k < cube.n; ++k)
      for (int j = 0; j < cube.n; ++j)
        for (int i = 0; i < cube.n; ++i) {
          const auto x = cube.position(i, j, k);
          const double radial = std::max(0.0, std::hypot(x[0] - 0.5, x[1] - 0.5) - patch_radius);
          const double phi = detail::quintic_step(std::hypot(radial, x[2]) / 0.25);
          Vec3 v{0, 0, 0};
          for (const auto& m : modes)
            v[m.c] += m.a * std::sin(3.14159265358979323846 * (m.p * x[0] + m.q * x[1] + m.r * x[2]) + m.ph);
          const auto idx = cube.index(i, j, k);
          z[idx] = {phi * v[0], phi * v[1], phi * v[2]};
          y[idx] = {x[0] + eps * z[idx][0], x[1] + eps * z[idx][1], x[2] + eps * z[idx][2]};
        }
    const auto r = rigidity_ratio(cube, y);
    if (!r) {
      ++rep.excluded;
      continue;
    }
    const double gz = detail::sum_over_cells(z, cube.n, cube.n, cube.n, d, d, d,
                                             [](const Eigen::Matrix3d& G) { return G.squaredNorm(); });
    const double sz = detail::sum_over_cells(z, cube.n, cube.n, cube.n, d, d, d, [](const Eigen::Matrix3d& G) {
      return (0.5 * (G + G.transpose())).squaredNorm();
    });
    rep.ratios.push_back(*r);
    rep.linearized.push_back(gz / sz);
    rep.max_ratio = std::max(rep.max_ratio, *r);
    rep.max_linearized = std::max(rep.max_linearized, gz / sz);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Binary dump: 16-byte header (magic, nx, ny, nz as int32), then h, alpha and
// delta as doubles, then y row-major (layer, row, column, component).

inline constexpr std::int32_t kPlateMagic = 0x33445350;  // "PSD3"

inline void save_state(const std::string& path, const Plate3DState& st) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path);
  const std::int32_t head[4] = {kPlateMagic, st.grid.nx(), st.grid.ny(), st.nz};
  os.write(reinterpret_cast<const char*>(head), sizeof head);
  const double meta[3] = {st.h, st.alpha, st.grid.delta()};
  os.write(reinterpret_cast<const char*>(meta), sizeof meta);
  os.write(reinterpret_cast<const char*>(st.y.data()), static_cast<std::streamsize>(st.y.size() * sizeof(Vec3)));
}

inline Plate3DState load_state(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read " + path);
  std::int32_t head[4];
  double meta[3];
  is.read(reinterpret_cast<char*>(head), sizeof head);
  is.read(reinterpret_cast<char*>(meta), sizeof meta);
  if (!is || head[0] != kPlateMagic) throw ConfigError(path + " is not a plate state dump");
  Plate3DState st(Grid2D(head[1], head[2], meta[2]), meta[0], head[3], meta[1]);
  is.read(reinterpret_cast<char*>(st.y.data()), static_cast<std::streamsize>(st.y.size() * sizeof(Vec3)));
  if (!is) throw ConfigError(path + " is truncated");
  return st;
}

}  // namespace plate_support
