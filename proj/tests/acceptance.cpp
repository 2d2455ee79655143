// Acceptance suite: one line per criterion, PASS or FAIL at fixed tolerances.
//
//   acceptance [--only 1,4] [--expect-fail 8,10]
//
// Exit status is 0 when the set of failing criteria equals the --expect-fail
// set, so known failures stay visible in the output without breaking ctest.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "plate_support/audit.hpp"
#include "plate_support/biharmonic.hpp"
#include "plate_support/dual.hpp"
#include "plate_support/optimizer.hpp"
#include "plate_support/plate3d.hpp"
#include "so3_oracle.hpp"
#include "test_support.hpp"

namespace ps = plate_support;
using ps::Grid2D;
using ps::ScalarField2D;
using ps::SupportGraph;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::set<int> parse_list(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.insert(std::stoi(tok));
  return out;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// discrete L2 error (trapezoid weights) against sin^2(pi x) sin^2(pi y)
double manufactured_l2_error(int n) {
  const auto g = Grid2D::square(n);
  const auto f = ScalarField2D::sample(g, ps::testing::manufactured_load);
  const auto u = ps::solve_plate(SupportGraph::boundary(g), f).first;
  double e = 0.0;
  for (int k = 0; k < g.size(); ++k) {
    const auto p = g.position(k);
    const double d = u[k] - ps::testing::manufactured_solution(p[0], p[1]);
    e += d * d * g.trapezoid_weight(k);
  }
  return std::sqrt(e);
}

Verdict c1_manufactured() {
  const auto t0 = std::chrono::steady_clock::now();
  const double e32 = manufactured_l2_error(33), e64 = manufactured_l2_error(65);
  const double ratio = e32 / e64, t = elapsed(t0);
  return {ratio >= 3.2 && ratio <= 4.8 && t < 30,
          "L2 error ratio delta 1/32 -> 1/64 = " + fmt("%.3f", ratio) + " (want [3.2, 4.8]), errors " + fmt("%.3e", e32) +
              " / " + fmt("%.3e", e64) + ", " + fmt("%.1f", t) + " s (limit 30 s)"};
}

Verdict c2_compliance_identity() {
  const auto g = Grid2D::square(16);
  const ScalarField2D f(g, 1.0);
  const auto sys = ps::assemble(SupportGraph::boundary(g), f);
  const auto u = ps::solve_dense(sys).first;
  const double rel = ps::compliance_identity_check(u, f, sys);
  return {rel < 1e-10, "16x16 dense solve: |sum u f delta^2 - u.Au| / compliance = " + fmt("%.2e", rel) + " (want < 1e-10)"};
}

Verdict c3_monotonicity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto g = Grid2D::square(33);
  const ScalarField2D f(g, 1.0);
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> node(1, g.nx() - 2), steps(4, 24);
  int bad = 0;
  double worst = -1e300;
  for (int t = 0; t < 50; ++t) {
    // K1: boundary plus a few walks; K2 adds one or two more
    auto K1 = SupportGraph::boundary(g);
    const int walks = t % 4;
    for (int w = 0; w < walks; ++w) K1 = ps::unite(K1, ps::testing::random_walk(g, node(rng), node(rng), steps(rng), rng));
    auto K2 = ps::unite(K1, ps::testing::random_walk(g, node(rng), node(rng), steps(rng), rng));
    if (t % 2) K2 = ps::unite(K2, ps::testing::random_walk(g, node(rng), node(rng), steps(rng), rng));
    const double c1 = ps::solve_plate(K1, f).second.compliance, c2 = ps::solve_plate(K2, f).second.compliance;
    worst = std::max(worst, (c2 - c1) / c1);
    bad += c2 > c1 + 1e-8 * c1;
  }
  const double tt = elapsed(t0);
  return {bad == 0 && tt < 120, "50 nested pairs on 33x33: " + std::to_string(bad) + " violations, max (C2 - C1)/C1 = " +
                                    fmt("%.2e", worst) + " (want <= 1e-8), " + fmt("%.1f", tt) + " s (limit 120 s)"};
}

Verdict c4_duality_gap() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> gaps;
  for (int n : {17, 33, 65}) {
    const auto g = Grid2D::square(n);
    const ScalarField2D f(g, 1.0);
    const auto K = SupportGraph::boundary(g);
    const double primal = ps::solve_plate(K, f).second.compliance;
    gaps.push_back(ps::duality_gap(primal, ps::dual_for(K, f).report).gap_rel);
  }
  const double t = elapsed(t0);
  const bool mono = gaps[1] < gaps[0] && gaps[2] < gaps[1];
  return {mono && gaps[2] < 0.05 && t < 300, "relative gap at delta 1/16, 1/32, 1/64 = " + fmt("%.4f", gaps[0]) + ", " +
                                                 fmt("%.4f", gaps[1]) + ", " + fmt("%.4f", gaps[2]) +
                                                 " (want decreasing, last < 0.05), " + fmt("%.1f", t) + " s (limit 300 s)"};
}

Verdict c5_saddle() {
  const auto g = Grid2D::square(16);
  const auto K = SupportGraph::boundary(g);
  const ScalarField2D f(g, 1.0);
  const auto u = ps::solve_plate(K, f).first;
  const auto p = ps::saddle_check(K, u, f, 100, 1);
  const auto a = ps::saddle_check(K, u, f, 20, 2);
  const bool ok = p.perturbation_trials == 100 && p.max_increase_rel <= 1e-9 && a.admissible_trials == 20 &&
                  a.max_constancy_rel < 0.05;
  return {ok, "100 perturbations: max relative increase " + fmt("%.2e", p.max_increase_rel) +
                  " (want <= 1e-9); 20 admissible u: max |F(u, M*) + sum|M*|^2| / |.| = " +
                  fmt("%.4f", a.max_constancy_rel) + " (want < 0.05)"};
}

Verdict c6_ahlfors() {
  const double lambda = 1e-4;
  const std::vector<double> upper_radii{0.125, 0.25};
  int violations = 0, checked = 0;
  double c_upper[2] = {0, 0};
  const int sizes[2] = {17, 33};
  for (int s = 0; s < 2; ++s) {
    const auto g = Grid2D::square(sizes[s]);
    const ScalarField2D f(g, 1.0);
    const double d = g.delta();
    const std::vector<double> lower_radii{d, 2 * d, 4 * d, 0.125, 0.25, 0.5};
    for (std::uint64_t seed : {1, 2, 3}) {
      ps::OptimizerConfig cfg;
      cfg.lambda = lambda;
      cfg.budget = 200;
      cfg.seed = seed;
      const auto K = ps::optimize(f, cfg).best;
      const auto in = ps::AuditInput::from(K, f, lambda);
      const auto lo = ps::ahlfors_audit(in, K.nodes(), lower_radii);
      violations += lo.lower_violations;
      checked += lo.lower_checked;
      c_upper[s] = std::max(c_upper[s], ps::ahlfors_audit(in, K.nodes(), upper_radii).c_upper);
    }
  }
  const double drift = std::abs(c_upper[1] - c_upper[0]) / c_upper[0];
  return {violations == 0 && checked > 0 && drift <= 0.25,
          std::to_string(violations) + " lower-bound violations over " + std::to_string(checked) +
              " balls (6 optimizer outputs); calibrated upper C = " + fmt("%.5f", c_upper[0]) + " (17x17) vs " +
              fmt("%.5f", c_upper[1]) + " (33x33), drift " + fmt("%.1f", 100 * drift) + "% (want <= 25%)"};
}

Verdict c7_continuity() {
  const auto g = Grid2D::square(33);
  const int m = g.nx() - 1;
  auto K = SupportGraph::boundary(g);
  K = ps::unite(K, SupportGraph::segment(g, m / 2, 0, m / 2, m / 2));
  K = ps::unite(K, SupportGraph::segment(g, m / 4, m / 2, 3 * m / 4, m / 2));
  const auto seq = ps::leaf_removal_sequence(K, {8, 4, 2, 1, 0});
  const auto rep = ps::continuity_audit(ScalarField2D(g, 1.0), seq);
  bool strict = true;
  std::string col;
  for (std::size_t k = 0; k < rep.rows.size(); ++k) {
    col += (k ? ", " : "") + fmt("%.2e", rep.rows[k].field_distance);
    if (k > 0 && rep.rows[k].set_distance < rep.rows[k - 1].set_distance &&
        !(rep.rows[k].field_distance < rep.rows[k - 1].field_distance))
      strict = false;
  }
  const bool ok = rep.field_monotone && strict && rep.rows.back().set_distance == 0.0 && rep.final_field_distance < 1e-8;
  return {ok, "leaf removal {8, 4, 2, 1, 0}: H2 distance column " + col + "; final " +
                  fmt("%.1e", rep.final_field_distance) + " (want decreasing to < 1e-8)"};
}

struct Ladder {
  ps::GammaReport rep;
  std::vector<double> identity_C;
  double seconds = 0.0;
};

const Ladder& gamma_ladder() {
  static const Ladder L = [] {
    Ladder l;
    const auto t0 = std::chrono::steady_clock::now();
    const auto g = Grid2D::square(129);
    const ScalarField2D f(g, 1.0);
    l.rep = ps::gamma_limit_experiment(SupportGraph::boundary(g), f, 4.0, {0.125, 0.0625, 0.03125});
    for (double h : {0.125, 0.0625, 0.03125}) l.identity_C.push_back(ps::identity_energy(g, f, h, 4.0).total / std::pow(h, 4.0));
    l.seconds = elapsed(t0);
    return l;
  }();
  return L;
}

Verdict c8_gamma_limit() {
  const auto& L = gamma_ladder();
  const auto& r = L.rep.rows;
  const bool strict = r[1].gap_rel < r[0].gap_rel && r[2].gap_rel < r[1].gap_rel;
  return {strict && r[2].gap_rel < 0.05 && L.seconds < 600,
          "129x129, h = 1/8, 1/16, 1/32: relative gap " + fmt("%.4f", r[0].gap_rel) + ", " + fmt("%.4f", r[1].gap_rel) +
              ", " + fmt("%.4f", r[2].gap_rel) + " (want strictly decreasing, last < 0.05); I(u) = " +
              fmt("%.4e", L.rep.limit_value) + ", " + fmt("%.1f", L.seconds) + " s (limit 600 s)"};
}

Verdict c9_so3() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    Eigen::Matrix3d F;
    for (int i = 0; i < 9; ++i) F(i / 3, i % 3) = u(rng);
    worst = std::max(worst, std::abs(ps::dist_SO3(F).distance - ps::testing::brute_force_dist_SO3(F, 100000, rng)));
  }
  // frame invariance of the plate energy on a smooth O(0.1) deformation
  const auto g = Grid2D::square(17);
  ps::Plate3DState st(g, 0.1, 5, 4.0);
  for (int k = 0; k < st.nz; ++k)
    for (int n = 0; n < g.size(); ++n) {
      const auto r = st.reference(n, k);
      st.y[st.index(n, k)] = {r[0] + 0.1 * std::sin(3 * r[1]) * r[2] / 0.1, r[1] + 0.05 * r[0] * r[0],
                              r[2] * (1 + 0.2 * r[0]) + 0.1 * std::cos(2 * r[0] + r[1])};
    }
  const double e0 = ps::energy_Eh(st);
  double frame = 0.0;
  std::normal_distribution<double> gauss;
  for (int t = 0; t < 10; ++t) {
    const auto R = ps::testing::quaternion_matrix({gauss(rng), gauss(rng), gauss(rng), gauss(rng)});
    frame = std::max(frame, std::abs(ps::energy_Eh(ps::rotated(st, R)) - e0) / e0);
  }
  return {worst < 1e-3 && frame < 1e-12, "max |dist_SO3 - brute force| over 100 matrices = " + fmt("%.2e", worst) +
                                             " (want < 1e-3); frame invariance over 10 rotations " + fmt("%.2e", frame) +
                                             " relative (want < 1e-12)"};
}

Verdict c10_scaling_bracket() {
  const auto& L = gamma_ladder();
  const auto& r = L.rep.rows;
  double worst = 1.0;
  bool same_sign = true;
  for (std::size_t k = 1; k < r.size(); ++k) {
    const double a = r[k - 1].energy.scaled, b = r[k].energy.scaled;
    same_sign = same_sign && (a > 0) == (b > 0) && a != 0.0;
    if (a != 0.0 && b != 0.0) worst = std::max(worst, std::max(std::abs(a / b), std::abs(b / a)));
  }
  double cmin = 1e300, cmax = -1e300;
  for (double c : L.identity_C) cmin = std::min(cmin, c), cmax = std::max(cmax, c);
  const bool c_stable = cmax <= 0.0 || (cmin > 0 && cmax / cmin <= 2.0);
  std::string scaled;
  for (std::size_t k = 0; k < r.size(); ++k) scaled += (k ? ", " : "") + fmt("%.3e", r[k].energy.scaled);
  return {same_sign && worst <= 2.0 && c_stable,
          "scaled J along the ladder " + scaled + ", worst successive ratio " + fmt("%.2f", worst) +
              " (want <= 2); J(identity) / h^alpha = " + fmt("%.1e", L.identity_C[0]) + ", " + fmt("%.1e", L.identity_C[1]) +
              ", " + fmt("%.1e", L.identity_C[2]) + " (want bounded and stable)"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only, expect_fail;
  for (int a = 1; a < argc; ++a) {
    const std::string s = argv[a];
    if (s == "--only" && a + 1 < argc) only = parse_list(argv[++a]);
    else if (s == "--expect-fail" && a + 1 < argc) expect_fail = parse_list(argv[++a]);
    else {
      std::fprintf(stderr, "usage: acceptance [--only 1,2] [--expect-fail 8,10]\n");
      return 2;
    }
  }
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"manufactured solution, second order", c1_manufactured},
      {"compliance identity", c2_compliance_identity},
      {"compliance monotone under nesting", c3_monotonicity},
      {"primal-dual gap", c4_duality_gap},
      {"saddle property", c5_saddle},
      {"Ahlfors bounds on optimizer outputs", c6_ahlfors},
      {"Hausdorff continuity", c7_continuity},
      {"3D recovery ladder vs limit energy", c8_gamma_limit},
      {"SO(3) distance kernel", c9_so3},
      {"energy scaling bracket", c10_scaling_bracket},
  };
  std::set<int> failed;
  int run = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    ++run;
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {false, std::string("raised: ") + e.what()};
    }
    if (!v.pass) failed.insert(id);
    const char* note = !v.pass && expect_fail.count(id) ? "  [known failure]" : "";
    std::printf("criterion %2d %s  %s: %s%s\n", id, v.pass ? "PASS" : "FAIL", criteria[k].first, v.detail.c_str(), note);
    std::fflush(stdout);
  }
  std::set<int> expected;
  for (int id : expect_fail)
    if (only.empty() || only.count(id)) expected.insert(id);
  std::printf("%d/%d criteria pass", run - static_cast<int>(failed.size()), run);
  if (!expected.empty()) {
    std::printf("; expected failures:");
    for (int id : expected) std::printf(" %d", id);
  }
  std::printf("\n");
  for (int id : expected)
    if (!failed.count(id)) std::printf("criterion %d was expected to fail but passed\n", id);
  return failed == expected ? 0 : 1;
}
