#include <gtest/gtest.h>

#include <set>

#include "rtd/julia.hpp"
#include "support.hpp"

using namespace rtd;

TEST(Julia, SquareFixtureApproximatesUnitCircle) {
  JuliaParams jp;
  jp.R_max = 2.0;
  std::vector<FiberMap> maps(12, FiberMap::square());
  cplx seed[] = {repelling_fixed_point(maps[0])};
  auto cloud = approximate_julia(maps, 12, seed, jp);
  std::vector<cplx> circle;
  for (int k = 0; k < 4096; ++k) circle.push_back(std::polar(1.0, 2 * pi * k / 4096.0));
  EXPECT_LE(hausdorff_distance(cloud.points, circle), 0.01);
  for (cplx z : cloud.points) EXPECT_NEAR(std::abs(z), 1.0, 1e-12);
}

TEST(Julia, LinearFixtureExpandsAtItsMultiplier) {
  JuliaParams jp;
  std::vector<FiberMap> maps(11, FiberMap::linear(2.0));
  std::vector<cplx> seeds;
  for (int a = -3; a <= 3; ++a)
    for (int b = -3; b <= 3; ++b) seeds.emplace_back(0.5 * a, 0.5 * b);
  auto clouds = pullback_sweep(maps, seeds, jp);
  auto ex = expansion_constants(clouds, 10);
  EXPECT_NEAR(ex.gamma, 2.0, 0.1);
  EXPECT_NEAR(ex.c, 1.0, 1e-6);
}

TEST(Julia, RepellingFixedPoint) {
  for (auto f : {FiberMap::exp(0.2), FiberMap::exp(0.3), FiberMap::square()}) {
    cplx p = repelling_fixed_point(f);
    EXPECT_LE(std::abs(value(f, p) - p), 1e-10);
    EXPECT_GT(std::abs(deriv(f, p)), 1.0);
  }
}

TEST(Julia, CloudPointsMapOntoTheNextCloud) {
  const auto& w = fixtures::small_window();
  std::vector<JuliaCloud> clouds;
  for (std::size_t j = 0; j <= 5; ++j) clouds.push_back(*w.grids[j]);
  EXPECT_LE(forward_chain_residual(std::span(w.maps).first(5), clouds), 1e-8);
  for (std::size_t j = 0; j < 5; ++j) {
    const auto& c = *w.grids[j];
    const auto& next = *w.grids[j + 1];
    for (std::size_t i = 0; i < c.size(); i += 7) {
      EXPECT_LE(std::abs(c.points[i]), w.julia.R_max + 1e-12);
      EXPECT_LE(std::abs(value(w.maps[j], c.points[i]) - next.points[c.parent[i]]), 1e-8);
    }
  }
}

TEST(Julia, DedupLeavesOnePointPerCell) {
  const auto& c = *fixtures::small_window().grids[3];
  std::set<std::pair<long long, long long>> cells;
  for (cplx z : c.points) EXPECT_TRUE(cells.emplace(std::llround(z.real() / c.h_dedup), std::llround(z.imag() / c.h_dedup)).second);
}

TEST(Julia, ExpansionIsUniformOnTheExpFamily) {
  auto ex = expansion_constants(fixtures::small_window().grids, 10);
  EXPECT_GT(ex.gamma_lo, 1.0);
  EXPECT_GT(ex.c, 0.0);
  EXPECT_TRUE(ex.pass);
}

TEST(Julia, MixingTimeIsFinite) {
  const auto& w = fixtures::small_window();
  auto m = mixing_time(std::span(w.grids).first(12), 0.5, 10.0, w.julia.cover());
  EXPECT_TRUE(m.found);
  EXPECT_GE(m.N, 1);
}

TEST(Julia, SweepIsDeterministic) {
  JuliaParams jp;
  jp.h_dedup = 0.1;
  auto maps = orbit_maps(fixtures::golden_rotation(), BasePoint{0.3, 0, 0}, FamilyConfig{}, 0, 12);
  cplx seed[] = {repelling_fixed_point(maps.back())};
  auto a = pullback_sweep(maps, seed, jp);
  auto b = pullback_sweep(maps, seed, jp);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    ASSERT_EQ(a[j].points, b[j].points);
    ASSERT_EQ(a[j].parent, b[j].parent);
  }
}

TEST(Julia, PostsingularDistanceIsPositive) {
  const auto& w = fixtures::small_window();
  auto post = postsingular_points(std::span(w.maps).first(1));
  EXPECT_GT(delta0_estimate(*w.grids[1], post), 0.0);
}
