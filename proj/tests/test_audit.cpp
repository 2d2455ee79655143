#include <gtest/gtest.h>

#include <random>

#include "plate_support/audit.hpp"
#include "plate_support/optimizer.hpp"
#include "test_support.hpp"

namespace ps = plate_support;
using ps::Grid2D;
using ps::ScalarField2D;
using ps::SupportGraph;

namespace {
// boundary plus a comb hanging from the bottom edge
SupportGraph comb(const Grid2D& g) {
  auto K = SupportGraph::boundary(g);
  const int m = g.nx() - 1;
  K = ps::unite(K, SupportGraph::segment(g, m / 2, 0, m / 2, m / 2));
  K = ps::unite(K, SupportGraph::segment(g, m / 4, m / 2, 3 * m / 4, m / 2));
  return K;
}
}  // namespace

TEST(SegmentInDisc, ClipsExactly) {
  EXPECT_NEAR(ps::segment_in_disc({-2, 0}, {2, 0}, {0, 0}, 1.0), 2.0, 1e-15);
  EXPECT_NEAR(ps::segment_in_disc({0, 0}, {2, 0}, {0, 0}, 1.0), 1.0, 1e-15);
  EXPECT_NEAR(ps::segment_in_disc({-2, 0.6}, {2, 0.6}, {0, 0}, 1.0), 1.6, 1e-12);
  EXPECT_EQ(ps::segment_in_disc({-2, 1.5}, {2, 1.5}, {0, 0}, 1.0), 0.0);
  EXPECT_NEAR(ps::segment_in_disc({0.1, 0}, {0.3, 0}, {0, 0}, 1.0), 0.2, 1e-15);
}

TEST(Ahlfors, ChordPasses) {
  const auto g = Grid2D::square(33);
  const auto K = SupportGraph::segment(g, 0, 16, 32, 16);
  const auto in = ps::AuditInput::from(K, ScalarField2D(g, 1.0));
  const double r = 10 * g.delta();
  const auto rep = ps::ahlfors_audit(in, {g.index(16, 16)}, {r});
  ASSERT_EQ(rep.balls.size(), 1u);
  EXPECT_NEAR(rep.balls[0].length, 2 * r, 1e-12);
  EXPECT_TRUE(rep.balls[0].lower_checked);
  EXPECT_EQ(rep.lower_violations, 0);
}

TEST(Ahlfors, IsolatedStubIsFlagged) {
  const auto g = Grid2D::square(33);
  const double r = 8 * g.delta();
  // a 4-cell stub (length r/2) in the middle, far from the rest of K
  const auto K = ps::unite(SupportGraph::boundary(g), SupportGraph::segment(g, 14, 16, 18, 16));
  const auto in = ps::AuditInput::from(K, ScalarField2D(g, 1.0));
  const auto rep = ps::ahlfors_audit(in, {g.index(16, 16)}, {r});
  EXPECT_NEAR(rep.balls[0].length, r / 2, 1e-12);
  EXPECT_EQ(rep.lower_violations, 1);
}

TEST(Ahlfors, LargeBallsAreNotChecked) {
  const auto g = Grid2D::square(17);
  const auto K = SupportGraph::segment(g, 6, 8, 10, 8);
  const auto rep = ps::ahlfors_audit(ps::AuditInput::from(K, ScalarField2D(g, 1.0)), {g.index(8, 8)},
                                     {0.1, 0.2, 0.4});
  EXPECT_DOUBLE_EQ(rep.diam, 0.25);
  EXPECT_EQ(rep.lower_checked, 1);
  EXPECT_EQ(rep.lower_violations, 0);
}

TEST(Ahlfors, CenterMustLieOnK) {
  const auto g = Grid2D::square(9);
  const auto in = ps::AuditInput::from(SupportGraph::boundary(g), ScalarField2D(g, 1.0));
  EXPECT_THROW(ps::ahlfors_audit(in, {g.index(4, 4)}, {0.1}), ps::CenterNotOnK);
}

TEST(Ahlfors, OptimizerOutputsPassLowerBound) {
  const auto g = Grid2D::square(17);
  const ScalarField2D f(g, 1.0);
  for (std::uint64_t seed : {1, 2, 3}) {
    ps::OptimizerConfig c;
    c.lambda = 1e-5;
    c.budget = 100;
    c.seed = seed;
    const auto rec = ps::optimize(f, c);
    const auto in = ps::AuditInput::from(rec.best, f, c.lambda);
    std::vector<double> radii;
    for (int k = 1; k <= 8; ++k) radii.push_back(k * g.delta());
    const auto rep = ps::ahlfors_audit(in, rec.best.nodes(), radii);
    EXPECT_GT(rep.lower_checked, 0);
    EXPECT_EQ(rep.lower_violations, 0) << "seed " << seed;
    EXPECT_GE(rep.c_upper, 0.0);
    EXPECT_GE(rep.c_upper, rep.c_min);
  }
}

TEST(Ahlfors, UpperConstantIsFeasible) {
  const auto g = Grid2D::square(17);
  const ScalarField2D f(g, 3.0);
  const auto K = comb(g);
  const auto in = ps::AuditInput::from(K, f, 1e-4);
  const auto rep = ps::ahlfors_audit(in, K.nodes(), {0.125, 0.25});
  for (const auto& b : rep.balls)
    EXPECT_LE(b.energy + 1e-4 * b.length, 1e-4 * 2 * ps::kPi * b.r + rep.c_upper * 3.0 * b.r * b.r + 1e-15);
}

TEST(Griffith, ZeroLoadInteriorBall) {
  const auto g = Grid2D::square(33);
  const auto K = SupportGraph::boundary(g);
  const auto in = ps::AuditInput::from(K, ScalarField2D(g, 0.0));
  const double r = 8 * g.delta();
  const auto rep = ps::griffith_competitor_audit(in, {g.index(16, 16)}, {r}, true);
  ASSERT_EQ(rep.balls.size(), 1u);
  const auto& b = rep.balls[0];
  EXPECT_EQ(b.minimizer_side, 0.0);
  EXPECT_GT(b.competitor_side, 0.0);
  // the corrected lattice circle approximates 2 pi r
  EXPECT_NEAR(b.competitor_side, 2 * ps::kPi * r, 0.1 * 2 * ps::kPi * r);
  EXPECT_EQ(rep.calibrated_C, 0.0);
}

TEST(Griffith, BallMustBeInterior) {
  const auto g = Grid2D::square(17);
  const auto K = SupportGraph::boundary(g);
  const auto in = ps::AuditInput::from(K, ScalarField2D(g, 1.0));
  EXPECT_THROW(ps::griffith_competitor_audit(in, {g.index(0, 8)}, {0.25}, true), ps::BallNotInterior);
  EXPECT_NO_THROW(ps::griffith_competitor_audit(in, {g.index(0, 8)}, {0.25}, false));
}

TEST(Griffith, CalibratedConstantCoversEveryBall) {
  const auto g = Grid2D::square(17);
  const ScalarField2D f(g, 1.0);
  const auto K = comb(g);
  const auto in = ps::AuditInput::from(K, f, 1e-5);
  const double d = g.delta();
  const auto rep = ps::griffith_competitor_audit(in, K.nodes(), {2 * d, 4 * d, 8 * d});
  EXPECT_EQ(rep.violations_at(rep.calibrated_C), 0);
  EXPECT_GT(rep.violations_at(0.5 * rep.calibrated_C), 0);
}

TEST(Griffith, DamagedSupportIsDetected) {
  const auto g = Grid2D::square(17);
  const ScalarField2D f(g, 1.0);
  const double lambda = 1e-5, d = g.delta();
  const std::vector<double> radii{2 * d, 4 * d, 8 * d};
  ps::OptimizerConfig c;
  c.lambda = lambda;
  c.budget = 120;
  c.seed = 2;
  const auto K = ps::optimize(f, c).best;
  const auto base = ps::griffith_competitor_audit(ps::AuditInput::from(K, f, lambda), K.nodes(), radii);
  int damaged = 0, flagged = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    std::mt19937_64 rng(seed);
    const auto D = ps::damage_support(K, 0.1, rng);
    ASSERT_TRUE(ps::is_connected(D));
    ASSERT_TRUE(D.include_boundary());
    if (D == K) continue;
    ++damaged;
    const auto rep = ps::griffith_competitor_audit(ps::AuditInput::from(D, f, lambda), D.nodes(), radii);
    flagged += rep.violations_at(base.calibrated_C) > 0;
  }
  ASSERT_GT(damaged, 0);
  EXPECT_GT(flagged, 0);
}

TEST(DamageSupport, KeepsPerimeterAndReconnects) {
  const auto g = Grid2D::square(17);
  const auto K = comb(g);
  std::mt19937_64 rng(3);
  const auto D = ps::damage_support(K, 0.5, rng);
  EXPECT_TRUE(ps::is_connected(D));
  for (const auto& e : SupportGraph::perimeter_edges(g)) EXPECT_TRUE(D.has_edge(e));
}

TEST(Continuity, ConstantSequence) {
  const auto g = Grid2D::square(17);
  const auto K = comb(g);
  const auto rep = ps::continuity_audit(ScalarField2D(g, 1.0), {K, K, K});
  for (const auto& row : rep.rows) {
    EXPECT_EQ(row.set_distance, 0.0);
    EXPECT_EQ(row.field_distance, 0.0);
  }
}

TEST(Continuity, LeafRemovalSequence) {
  const auto g = Grid2D::square(17);
  const auto K = comb(g);
  const auto seq = ps::leaf_removal_sequence(K, {8, 4, 2, 1, 0});
  EXPECT_TRUE(seq.back() == K);
  const auto rep = ps::continuity_audit(ScalarField2D(g, 1.0), seq);
  ASSERT_EQ(rep.rows.size(), 5u);
  for (std::size_t k = 1; k < rep.rows.size(); ++k) {
    EXPECT_LE(rep.rows[k].set_distance, rep.rows[k - 1].set_distance);
    EXPECT_LT(rep.rows[k].field_distance, rep.rows[k - 1].field_distance);
  }
  EXPECT_TRUE(rep.field_monotone);
  EXPECT_GT(rep.rows.front().field_distance, 1e-6);
  EXPECT_LT(rep.final_field_distance, 1e-8);
}

TEST(Continuity, RejectsWrongLimit) {
  const auto g = Grid2D::square(17);
  const auto K = comb(g);
  auto seq = ps::leaf_removal_sequence(K, {8, 4, 2, 1, 0});
  seq.push_back(seq.front());
  EXPECT_THROW(ps::continuity_audit(ScalarField2D(g, 1.0), seq), ps::ConfigError);
  seq = ps::leaf_removal_sequence(K, {1, 4, 0});
  EXPECT_THROW(ps::continuity_audit(ScalarField2D(g, 1.0), seq), ps::ConfigError);
  EXPECT_THROW(ps::continuity_audit(ScalarField2D(g, 1.0), {}), ps::ConfigError);
}

TEST(StripLeaves, RemovesOuterLeavesFirst) {
  const auto g = Grid2D::square(17);
  const auto K = comb(g);
  const auto K1 = ps::strip_leaves(K, 1);
  EXPECT_EQ(K1.edges().size() + 1, K.edges().size());
  EXPECT_TRUE(ps::is_connected(K1));
  // stripping never touches the perimeter, so it stops at the boundary
  EXPECT_TRUE(ps::strip_leaves(K, 1000) == SupportGraph::boundary(g));
}

TEST(Poincare, SquareConstantSecondOrder) {
  const double exact = 1.0 / (ps::kPi * std::sqrt(2.0));
  auto err = [&](int n) {
    return std::abs(ps::poincare_probe(SupportGraph::boundary(Grid2D::square(n))) - exact);
  };
  const double e17 = err(17), e33 = err(33);
  EXPECT_LT(e33, 2e-4);
  EXPECT_NEAR(e17 / e33, 4.0, 0.4);
}

TEST(Poincare, MidlineLowersConstant) {
  const auto g = Grid2D::square(17);
  const auto K = SupportGraph::boundary(g);
  const auto Km = ps::unite(K, SupportGraph::segment(g, 8, 0, 8, 16));
  EXPECT_LT(ps::poincare_probe(Km), ps::poincare_probe(K));
}

TEST(Poincare, ThinSlabBounded) {
  const auto g = Grid2D::square(17);
  const auto K = SupportGraph::boundary(g);
  std::vector<double> c;
  for (double h : {0.25, 0.125, 0.0625}) c.push_back(ps::thin_poincare_probe(K, h, 3));
  const double lo = *std::min_element(c.begin(), c.end()), hi = *std::max_element(c.begin(), c.end());
  EXPECT_GT(lo, 0.0);
  EXPECT_LE(hi / lo, 2.0);
  EXPECT_THROW(ps::thin_poincare_probe(K, 0.1, 1), ps::ConfigError);
}
