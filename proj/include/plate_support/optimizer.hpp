#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "plate_support/biharmonic.hpp"
#include "plate_support/errors.hpp"
#include "plate_support/support_graph.hpp"

namespace plate_support {

struct OptimizerConfig {
  double lambda = 1.0;
  int moves_per_temp = 20;
  double temp_init = -1.0;  // negative: 5% of the initial objective
  double cooling_ratio = 0.95;
  long budget = 200;  // solves, including the initial one
  std::uint64_t seed = 0;
  bool enforce_boundary = true;
  bool warm_start = true;
  double solver_tol = 1e-10;
  std::optional<SupportGraph> initial;  // default: boundary, or a short seeded segment

  std::vector<std::string> problems() const {
    std::vector<std::string> p;
    if (!(lambda >= 0.0)) p.push_back("lambda must be >= 0");
    if (!(cooling_ratio > 0.0 && cooling_ratio < 1.0)) p.push_back("cooling_ratio must lie in (0, 1)");
    if (budget < 1) p.push_back("budget must be >= 1");
    if (moves_per_temp < 1) p.push_back("moves_per_temp must be >= 1");
    if (!(solver_tol > 0.0)) p.push_back("solver_tol must be > 0");
    return p;
  }
  void validate() const {
    const auto p = problems();
    if (!p.empty()) throw ConfigError(p);
  }
};

enum class MoveKind { initial, add, remove, rewire };

inline const char* move_name(MoveKind k) {
  switch (k) {
    case MoveKind::initial: return "initial";
    case MoveKind::add: return "add";
    case MoveKind::remove: return "remove";
    case MoveKind::rewire: return "rewire";
  }
  return "?";
}

struct Evaluation {
  double objective = 0.0;
  double compliance = 0.0;
  double length = 0.0;
  ScalarField2D u;
  SolveReport report;
};

/// compliance(K) + lambda * length(K).
inline Evaluation evaluate(const SupportGraph& K, const ScalarField2D& f, double lambda, const SolveOptions& opt = {}) {
  if (!is_connected(K)) throw ConfigError("support set is not connected");
  auto [u, rep] = solve_plate(K, f, opt);
  Evaluation e{0.0, rep.compliance, length(K), std::move(u), rep};
  e.objective = e.compliance + lambda * e.length;
  return e;
}

inline double objective(const SupportGraph& K, const ScalarField2D& f, double lambda) {
  return evaluate(K, f, lambda).objective;
}

struct Move {
  MoveKind kind;
  SupportGraph K;
};

namespace detail {

inline std::vector<Edge> addable_edges(const SupportGraph& K) {
  const auto& g = K.grid();
  std::vector<Edge> out;
  for (int n : K.nodes())
    g.for_each_neighbor(n, [&](int m) {
      const Edge e(n, m);
      if (!K.has_edge(e)) out.push_back(e);
    });
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline bool removable(const SupportGraph& K, const Edge& e, bool enforce_boundary) {
  if (enforce_boundary && K.is_perimeter_edge(e)) return false;
  return is_connected(K.without_edge(e));
}

inline bool is_leaf_edge(const SupportGraph& K, const Edge& e) { return K.degree(e.a) == 1 || K.degree(e.b) == 1; }

template <class Rng>
std::optional<Edge> pick_removable(const SupportGraph& K, Rng& rng, bool enforce_boundary, bool leaf_only) {
  std::vector<Edge> cand;
  for (const auto& e : K.edges())
    if ((!leaf_only || is_leaf_edge(K, e)) && !(enforce_boundary && K.is_perimeter_edge(e))) cand.push_back(e);
  std::shuffle(cand.begin(), cand.end(), rng);
  for (const auto& e : cand)
    if (removable(K, e, enforce_boundary)) return e;
  return std::nullopt;
}

template <class Rng>
std::optional<SupportGraph> try_move(const SupportGraph& K, MoveKind kind, Rng& rng, bool enforce_boundary) {
  if (kind == MoveKind::add) {
    const auto cand = addable_edges(K);
    if (cand.empty()) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, cand.size() - 1);
    return K.with_edge(cand[pick(rng)]);
  }
  if (kind == MoveKind::remove) {
    const auto e = pick_removable(K, rng, enforce_boundary, false);
    if (!e) return std::nullopt;
    return K.without_edge(*e);
  }
  // rewire: drop a leaf edge, then grow somewhere else
  const auto e = pick_removable(K, rng, enforce_boundary, true);
  if (!e) return std::nullopt;
  const auto K1 = K.without_edge(*e);
  auto cand = addable_edges(K1);
  cand.erase(std::remove(cand.begin(), cand.end(), *e), cand.end());
  if (cand.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, cand.size() - 1);
  return K1.with_edge(cand[pick(rng)]);
}

}  // namespace detail

/// One random local move that keeps K connected (and its perimeter, when enforced).
/// The kind is drawn uniformly; kinds with no legal instance are skipped.
template <class Rng>
Move propose_move(const SupportGraph& K, Rng& rng, bool enforce_boundary) {
  std::vector<MoveKind> kinds{MoveKind::add, MoveKind::remove, MoveKind::rewire};
  std::shuffle(kinds.begin(), kinds.end(), rng);
  for (MoveKind k : kinds)
    if (auto next = detail::try_move(K, k, rng, enforce_boundary)) return {k, std::move(*next)};
  throw NoLegalMove();
}

struct TraceEntry {
  long step = 0;  // proposal counter
  long solves = 0;
  MoveKind kind = MoveKind::initial;
  double objective = 0.0;
  double compliance = 0.0;
  double length = 0.0;
  double temperature = 0.0;
  double best_objective = 0.0;
  bool tie = false;
};

struct RunRecord {
  OptimizerConfig config;
  std::vector<TraceEntry> trace;  // initial state, then accepted moves
  SupportGraph best;
  double best_objective = 0.0;
  double best_compliance = 0.0;
  double best_length = 0.0;
  long solves = 0;
  long proposals = 0;
  long ties = 0;
  std::string status;
  double wall_seconds = 0.0;
};

/// Every evaluated support, for sweeps that rescore candidates.
using EvaluationSink = std::function<void(const SupportGraph&, double compliance, double length)>;

/// K = perimeter when the boundary is enforced, otherwise a short horizontal
/// segment through a seeded node away from the rim.
inline SupportGraph default_initial(const Grid2D& g, bool enforce_boundary, std::uint64_t seed) {
  if (enforce_boundary) return SupportGraph::boundary(g);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pi(1, std::max(1, g.nx() - 4)), pj(1, g.ny() - 2);
  const int i = pi(rng), j = pj(rng);
  return SupportGraph::segment(g, i, j, std::min(i + 2, g.nx() - 1), j);
}

/// Simulated annealing on compliance + lambda * length over connected supports.
inline RunRecord optimize(const ScalarField2D& f, const OptimizerConfig& config, const EvaluationSink& sink = {}) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Grid2D& g = f.grid();
  RunRecord rec{config, {}, config.initial ? *config.initial : default_initial(g, config.enforce_boundary, config.seed)};
  if (config.enforce_boundary && !rec.best.include_boundary())
    throw ConfigError("enforce_boundary requires the initial support to contain the perimeter");
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SolveOptions opt;
  opt.tol = config.solver_tol;
  SupportGraph current = rec.best;
  Evaluation cur = evaluate(current, f, config.lambda, opt);
  rec.solves = 1;
  if (sink) sink(current, cur.compliance, cur.length);
  double T = config.temp_init >= 0 ? config.temp_init : 0.05 * std::abs(cur.objective);
  rec.best_objective = cur.objective;
  rec.best_compliance = cur.compliance;
  rec.best_length = cur.length;
  rec.trace.push_back({0, 1, MoveKind::initial, cur.objective, cur.compliance, cur.length, T, cur.objective, false});
  rec.status = "budget_exhausted";

  bool stuck = false;
  while (!stuck && rec.solves < config.budget) {
    for (int m = 0; m < config.moves_per_temp && rec.solves < config.budget; ++m) {
      Move mv{MoveKind::add, current};
      try {
        mv = propose_move(current, rng, config.enforce_boundary);
      } catch (const NoLegalMove&) {
        rec.status = "no_legal_move";
        stuck = true;
        break;
      }
      ++rec.proposals;
      if (config.warm_start) opt.warm_start = &cur.u;
      Evaluation next = evaluate(mv.K, f, config.lambda, opt);
      opt.warm_start = nullptr;
      ++rec.solves;
      if (sink) sink(mv.K, next.compliance, next.length);
      const double delta = next.objective - cur.objective;
      // the uniform draw is consumed on every proposal so the stream does not depend on delta
      const double draw = unif(rng);
      const bool tie = delta == 0.0;
      const bool accept = delta <= 0.0 || (T > 0 && draw < std::exp(-delta / T));
      if (!accept) continue;
      rec.ties += tie;
      current = std::move(mv.K);
      cur = std::move(next);
      if (cur.objective < rec.best_objective) {
        rec.best = current;
        rec.best_objective = cur.objective;
        rec.best_compliance = cur.compliance;
        rec.best_length = cur.length;
      }
      rec.trace.push_back({rec.proposals, rec.solves, mv.kind, cur.objective, cur.compliance, cur.length, T,
                           rec.best_objective, tie});
    }
    T *= config.cooling_ratio;
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

struct ParetoRow {
  double lambda = 0.0;
  double compliance = 0.0;
  double length = 0.0;
  double objective = 0.0;
  SupportGraph K;
};

/// One annealing run per lambda, each warm-started from the previous best.
/// Every support evaluated along the way is kept; each row reports the one
/// minimising compliance + lambda * length among them, so rows sorted by
/// length have non-increasing compliance.
inline std::vector<ParetoRow> pareto_sweep(const ScalarField2D& f, const std::vector<double>& lambdas,
                                           OptimizerConfig config) {
  if (lambdas.empty()) throw ConfigError("pareto sweep needs at least one lambda");
  if (!std::is_sorted(lambdas.begin(), lambdas.end())) throw ConfigError("lambdas must be sorted ascending");
  struct Seen {
    SupportGraph K;
    double compliance, length;
  };
  std::vector<Seen> archive;
  auto sink = [&](const SupportGraph& K, double c, double l) {
    for (const auto& s : archive)
      if (s.K == K) return;
    archive.push_back({K, c, l});
  };
  for (double lam : lambdas) {
    config.lambda = lam;
    const auto rec = optimize(f, config, sink);
    config.initial = rec.best;
  }
  std::vector<ParetoRow> rows;
  for (double lam : lambdas) {
    const Seen* best = nullptr;
    for (const auto& s : archive)
      if (!best || s.compliance + lam * s.length < best->compliance + lam * best->length) best = &s;
    rows.push_back({lam, best->compliance, best->length, best->compliance + lam * best->length, best->K});
  }
  return rows;
}

}  // namespace plate_support
