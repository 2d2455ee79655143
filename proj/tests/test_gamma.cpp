#include <gtest/gtest.h>

#include <cstdio>
#include <random>

#include "plate_support/plate3d.hpp"
#include "so3_oracle.hpp"
#include "test_support.hpp"

namespace ps = plate_support;
using Eigen::Matrix3d;
using Eigen::Vector3d;
using ps::Grid2D;
using ps::ScalarField2D;
using ps::SupportGraph;
using ps::VectorField2D;

namespace {
Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  return ps::testing::quaternion_matrix({gauss(rng), gauss(rng), gauss(rng), gauss(rng)});
}

ScalarField2D centre_bump(const Grid2D& g) {
  return ScalarField2D::sample(g, [](double x, double y) {
    const double t = 1 - ((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5)) / 0.09;
    return t > 0 ? t * t * t : 0.0;
  });
}

// smooth O(0.1) deformation of a plate, no special structure
ps::Plate3DState wavy_state(const Grid2D& g, double h, int nz) {
  ps::Plate3DState st(g, h, nz, 4.0);
  for (int k = 0; k < nz; ++k)
    for (int n = 0; n < g.size(); ++n) {
      const auto r = st.reference(n, k);
      st.y[st.index(n, k)] = {r[0] + 0.1 * std::sin(3 * r[1]) * r[2] / h, r[1] + 0.05 * r[0] * r[0],
                              r[2] * (1 + 0.2 * r[0]) + 0.1 * std::cos(2 * r[0] + r[1])};
    }
  return st;
}
}  // namespace

TEST(DistSO3, Identity) {
  const auto p = ps::dist_SO3(Matrix3d::Identity());
  EXPECT_NEAR(p.distance, 0.0, 1e-15);
  EXPECT_TRUE(p.R.isApprox(Matrix3d::Identity(), 1e-14));
}

TEST(DistSO3, IsotropicDilation) {
  const auto p = ps::dist_SO3(2 * Matrix3d::Identity());
  EXPECT_NEAR(p.distance, std::sqrt(3.0), 1e-14);
  EXPECT_TRUE(p.R.isApprox(Matrix3d::Identity(), 1e-14));
}

TEST(DistSO3, ReflectionMatchesBruteForce) {
  const Matrix3d F = Vector3d(1, 1, -1).asDiagonal();
  std::mt19937_64 rng(1);
  const double oracle = ps::testing::brute_force_dist_SO3(F, 1000000, rng);
  const auto p = ps::dist_SO3(F);
  EXPECT_NEAR(p.distance, oracle, 1e-3);
  EXPECT_NEAR(p.distance, 2.0, 1e-12);
  EXPECT_NEAR(p.R.determinant(), 1.0, 1e-12);
}

TEST(DistSO3, RandomMatricesMatchBruteForce) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int t = 0; t < 20; ++t) {
    Matrix3d F;
    for (int i = 0; i < 9; ++i) F(i / 3, i % 3) = u(rng);
    const auto p = ps::dist_SO3(F);
    EXPECT_NEAR(p.distance, ps::testing::brute_force_dist_SO3(F, 100000, rng), 1e-3);
    EXPECT_TRUE((p.R.transpose() * p.R).isApprox(Matrix3d::Identity(), 1e-12));
    EXPECT_NEAR(p.R.determinant(), 1.0, 1e-12);
    EXPECT_NEAR(p.distance, (F - p.R).norm(), 1e-12);
  }
}

TEST(DistSO3, FrameInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    Matrix3d F;
    for (int i = 0; i < 9; ++i) F(i / 3, i % 3) = u(rng);
    const Matrix3d Q = random_rotation(rng);
    EXPECT_NEAR(ps::dist_SO3(Q * F).distance, ps::dist_SO3(F).distance, 1e-12);
    EXPECT_NEAR(ps::dist_SO3(F * Q).distance, ps::dist_SO3(F).distance, 1e-12);
  }
}

TEST(EnergyEh, IdentityAndRigidMotionsAreFree) {
  const auto g = Grid2D::square(9);
  const auto id = ps::Plate3DState::identity(g, 0.1, 5, 4.0);
  EXPECT_EQ(ps::energy_Eh(id), 0.0);
  std::mt19937_64 rng(2);
  const auto moved = ps::rotated(id, random_rotation(rng), Vector3d(0.3, -1, 2));
  EXPECT_LT(ps::energy_Eh(moved), 1e-28);
}

TEST(EnergyEh, IsotropicStretchClosedForm) {
  const double eps = 0.01;
  for (double h : {0.2, 0.05}) {
    const auto g = Grid2D::square(9);
    auto st = ps::Plate3DState::identity(g, h, 4, 4.0);
    for (auto& v : st.y) v = {(1 + eps) * v[0], (1 + eps) * v[1], (1 + eps) * v[2]};
    EXPECT_NEAR(ps::energy_Eh(st), 1.5 * eps * eps, 1e-14);
  }
}

TEST(EnergyEh, FrameInvariance) {
  const auto st = wavy_state(Grid2D::square(17), 0.1, 5);
  const double e0 = ps::energy_Eh(st);
  ASSERT_GT(e0, 1e-4);
  std::mt19937_64 rng(11);
  for (int t = 0; t < 10; ++t) EXPECT_NEAR(ps::energy_Eh(ps::rotated(st, random_rotation(rng))), e0, 1e-12 * e0);
}

TEST(EnergyEh, ThreadCountDoesNotChangeValue) {
  const auto st = wavy_state(Grid2D::square(17), 0.1, 9);
  EXPECT_NEAR(ps::energy_Eh(st, 4), ps::energy_Eh(st, 1), 1e-13 * ps::energy_Eh(st, 1));
}

TEST(EnergyBreakdown, TotalIsElasticMinusLoad) {
  const auto g = Grid2D::square(17);
  const ScalarField2D f(g, 2.0);
  const auto st = wavy_state(g, 0.1, 5);
  const auto e = ps::energy_breakdown(st, f);
  EXPECT_EQ(e.total, e.elastic - e.load);
  EXPECT_DOUBLE_EQ(e.scaled, e.total / std::pow(0.1, 6));
  // the centred reference slab carries no load
  const auto id = ps::identity_energy(g, f, 0.1, 4.0);
  EXPECT_NEAR(id.total, 0.0, 1e-18);
}

TEST(Recovery, ZeroFieldsGiveIdentity) {
  const auto g = Grid2D::square(17);
  const auto K = SupportGraph::boundary(g);
  const auto st = ps::recovery_sequence(ScalarField2D(g), VectorField2D(g), 0.125, 4.0, K);
  EXPECT_EQ(ps::energy_Eh(st), 0.0);
  EXPECT_EQ(ps::glue_violation(st), 0.0);
}

TEST(Recovery, GlueIsExact) {
  const auto g = Grid2D::square(33);
  const auto K = SupportGraph::boundary(g);
  const double h = 0.125;
  const auto u = ps::solve_plate(ps::glue_support(K, h), ScalarField2D(g, 1.0)).first;
  const auto st = ps::recovery_sequence(u, VectorField2D(g), h, 4.0, K);
  EXPECT_EQ(st.glued.size(), ps::dilate(K, h).size());
  EXPECT_EQ(ps::glue_violation(st), 0.0);
  EXPECT_GT(ps::energy_Eh(st), 0.0);
}

TEST(Recovery, PreClampedRejectsUnclampedField) {
  const auto g = Grid2D::square(17);
  const auto K = SupportGraph::boundary(g);
  const auto u = ps::solve_plate(K, ScalarField2D(g, 1.0)).first;  // nonzero inside K_h
  EXPECT_THROW(ps::recovery_sequence(u, VectorField2D(g), 0.125, 4.0, K), ps::ConfigError);
}

TEST(Recovery, SmoothCutoffGluesAndGuardsWidth) {
  const auto g = Grid2D::square(33);
  const auto K = SupportGraph::boundary(g);
  const auto u = ps::solve_plate(K, ScalarField2D(g, 1.0)).first;
  ps::RecoveryOptions o;
  o.strategy = ps::GlueStrategy::smooth_cutoff;
  const auto st = ps::recovery_sequence(u, VectorField2D(g), 0.0625, 4.0, K, o);
  EXPECT_EQ(ps::glue_violation(st), 0.0);
  EXPECT_THROW(ps::recovery_sequence(u, VectorField2D(g), 0.2, 4.0, K, o), ps::CutoffTooWide);
}

TEST(Recovery, InteriorBumpLadderSettles) {
  const auto g = Grid2D::square(65);
  const auto K = SupportGraph::boundary(g);
  const ScalarField2D f(g, 1.0);
  const auto u = centre_bump(g);
  std::vector<double> scaled;
  for (double h : {0.125, 0.0625, 0.03125}) {
    const auto st = ps::recovery_sequence(u, VectorField2D(g), h, 4.0, K);
    scaled.push_back(ps::energy_breakdown(st, f).scaled);
  }
  for (std::size_t k = 1; k < scaled.size(); ++k)
    EXPECT_LT(std::abs(scaled[k] - scaled[k - 1]), 0.05 * std::abs(scaled[k - 1]));
  // against the limit functional with the same discrete Hessian
  const auto H = ps::hessian_field(u);
  double I = 0.0;
  for (int n = 0; n < g.size(); ++n) I += (H[n].norm2() / 24 - u[n] * f[n]) * g.trapezoid_weight(n);
  EXPECT_NEAR(scaled.back(), I, 0.03 * std::abs(I));
}

TEST(Extract, IdentityGivesZero) {
  const auto g = Grid2D::square(9);
  const auto [u, w] = ps::extract_displacements(ps::Plate3DState::identity(g, 0.1, 5, 4.0));
  EXPECT_EQ(ps::max_abs(u), 0.0);
  for (const auto& v : w.values()) EXPECT_EQ(std::abs(v[0]) + std::abs(v[1]), 0.0);
}

TEST(Extract, DefinitionalVerticalProfile) {
  const auto g = Grid2D::square(9);
  const double h = 0.1, alpha = 4.0, beta = 2 * alpha - 2;
  const auto gfun = ScalarField2D::sample(g, [](double x, double y) { return std::sin(x) * y; });
  auto st = ps::Plate3DState::identity(g, h, 5, alpha);
  for (int k = 0; k < st.nz; ++k)
    for (int n = 0; n < g.size(); ++n) st.y[st.index(n, k)][2] += std::pow(h, beta / 2 - 1) * gfun[n];
  const auto u = ps::extract_displacements(st).first;
  for (int n = 0; n < g.size(); ++n) EXPECT_NEAR(u[n], gfun[n], 1e-12);
}

TEST(Extract, RecoveryReturnsItsFields) {
  const auto g = Grid2D::square(33);
  const auto K = SupportGraph::boundary(g);
  const auto u = centre_bump(g);
  const auto w = VectorField2D::sample(g, [&](double x, double y) {
    const double b = std::pow(std::max(0.0, 1 - ((x - .5) * (x - .5) + (y - .5) * (y - .5)) / 0.09), 3);
    return std::array<double, 2>{0.3 * b, -0.1 * b};
  });
  const auto st = ps::recovery_sequence(u, w, 0.0625, 4.0, K);
  const auto [uh, wh] = ps::extract_displacements(st);
  for (int n = 0; n < g.size(); ++n) {
    ASSERT_NEAR(uh[n], u[n], 1e-12);
    ASSERT_NEAR(wh[n][0], w[n][0], 1e-10);
    ASSERT_NEAR(wh[n][1], w[n][1], 1e-10);
  }
}

TEST(Extract, LinearInDisplacement) {
  const auto g = Grid2D::square(9);
  const auto a = wavy_state(g, 0.1, 5);
  auto b = ps::Plate3DState::identity(g, 0.1, 5, 4.0);
  auto sum = b;
  for (std::size_t i = 0; i < b.y.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      b.y[i][c] += 0.01 * std::cos(double(i + c));
      sum.y[i][c] = a.y[i][c] + b.y[i][c] - sum.y[i][c];  // id + (a - id) + (b - id)
    }
  const auto ea = ps::extract_displacements(a).first, eb = ps::extract_displacements(b).first,
             es = ps::extract_displacements(sum).first;
  for (int n = 0; n < g.size(); ++n) EXPECT_NEAR(es[n], ea[n] + eb[n], 1e-9 * (1 + std::abs(es[n])));
}

TEST(GammaLimit, RejectsSmallAlpha) {
  const auto g = Grid2D::square(17);
  EXPECT_THROW(ps::gamma_limit_experiment(SupportGraph::boundary(g), ScalarField2D(g, 1.0), 3.0, {0.125}),
               ps::ConfigError);
  EXPECT_THROW(ps::gamma_limit_experiment(SupportGraph::boundary(g), ScalarField2D(g, 1.0), 4.0, {}), ps::ConfigError);
}

TEST(GammaLimit, ZeroLoadIsZeroEverywhere) {
  const auto g = Grid2D::square(17);
  const auto rep = ps::gamma_limit_experiment(SupportGraph::boundary(g), ScalarField2D(g, 0.0), 4.0, {0.125, 0.0625});
  EXPECT_EQ(rep.limit_value, 0.0);
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.energy.scaled, 0.0);
    EXPECT_EQ(r.gap_abs, 0.0);
  }
}

TEST(GammaLimit, LimitValueIsMinusSixCompliance) {
  const auto g = Grid2D::square(33);
  const ScalarField2D f(g, 1.0);
  const auto K = SupportGraph::boundary(g);
  const auto rep = ps::gamma_limit_experiment(K, f, 4.0, {0.125});
  EXPECT_NEAR(rep.limit_value, -6 * rep.compliance, 1e-8 * std::abs(rep.limit_value));
  // same value from the nodal Hessian of u = 12 u_K
  auto u = ps::solve_plate(K, f).first;
  for (auto& x : u.values()) x *= 12;
  const auto H = ps::hessian_field(u, K);
  double I = 0.0;
  for (int n = 0; n < g.size(); ++n) I += (H[n].norm2() / 24 - u[n] * f[n]) * g.trapezoid_weight(n);
  EXPECT_NEAR(I, rep.limit_value, 0.05 * std::abs(rep.limit_value));
}

TEST(GammaLimit, GapDecreasesAlongLadder) {
  const auto g = Grid2D::square(65);
  const auto rep =
      ps::gamma_limit_experiment(SupportGraph::boundary(g), ScalarField2D(g, 1.0), 4.0, {0.125, 0.0625, 0.03125});
  ASSERT_EQ(rep.rows.size(), 3u);
  for (std::size_t k = 1; k < rep.rows.size(); ++k) {
    EXPECT_LT(rep.rows[k].gap_rel, rep.rows[k - 1].gap_rel);
    EXPECT_LT(rep.rows[k].u_h_distance, rep.rows[k - 1].u_h_distance);
  }
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.glue_violation, 0.0);
    EXPECT_LT(r.w_h_norm, 1e-12);
  }
}

TEST(Rigidity, LinearizedOracleAndResolutionStability) {
  const auto a = ps::rigidity_probe(ps::CubeGrid{9}, 0.25, 6, 4);
  const auto b = ps::rigidity_probe(ps::CubeGrid{13}, 0.25, 6, 4);
  ASSERT_EQ(a.ratios.size(), 6u);
  for (std::size_t t = 0; t < a.ratios.size(); ++t) EXPECT_NEAR(a.ratios[t], a.linearized[t], 0.1 * a.linearized[t]);
  EXPECT_TRUE(std::isfinite(a.max_ratio));
  EXPECT_NEAR(b.max_ratio, a.max_ratio, 0.5 * a.max_ratio);
}

TEST(Rigidity, IdentityExcludedAndRotationUnbounded) {
  const ps::CubeGrid cube{5};
  std::vector<ps::Vec3> y(cube.size());
  for (int k = 0; k < 5; ++k)
    for (int j = 0; j < 5; ++j)
      for (int i = 0; i < 5; ++i) y[cube.index(i, j, k)] = cube.position(i, j, k);
  EXPECT_FALSE(ps::rigidity_ratio(cube, y).has_value());
  const Matrix3d R = ps::axis_angle(Vector3d(0, 0, 1), 0.3);
  for (auto& v : y) {
    const Vector3d r = R * Vector3d(v[0], v[1], v[2]);
    v = {r[0], r[1], r[2]};
  }
  const auto ratio = ps::rigidity_ratio(cube, y);
  ASSERT_TRUE(ratio.has_value());
  EXPECT_GT(*ratio, 1e12);
}

TEST(StateIO, RoundTrip) {
  const auto st = wavy_state(Grid2D::square(9), 0.1, 5);
  const std::string path = ::testing::TempDir() + "plate_state.bin";
  ps::save_state(path, st);
  const auto back = ps::load_state(path);
  EXPECT_EQ(back.grid.nx(), 9);
  EXPECT_EQ(back.nz, 5);
  EXPECT_EQ(back.h, 0.1);
  EXPECT_EQ(back.alpha, 4.0);
  EXPECT_EQ(back.y, st.y);
  std::remove(path.c_str());
  EXPECT_THROW(ps::load_state(path), ps::ConfigError);
}
