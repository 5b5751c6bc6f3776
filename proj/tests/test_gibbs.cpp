#include <gtest/gtest.h>

#include "rtd/observables.hpp"
#include "support.hpp"

using namespace rtd;

namespace {

std::vector<std::vector<double>> random_fields(const JuliaCloud& grid, int n, std::uint64_t seed) {
  std::vector<std::vector<double>> gs;
  for (int s = 0; s < n; ++s) gs.push_back(sample_on(grid, RandomField::make(seed + s)));
  return gs;
}

}  // namespace

TEST(Gibbs, MeasuresAreProbabilities) {
  const auto& g = fixtures::small_gibbs();
  for (const auto& nu : g.nu) {
    EXPECT_NEAR(nu.mass(), 1.0, 1e-12);
    for (double x : nu.weights) EXPECT_GE(x, 0.0);
  }
}

TEST(Gibbs, DensityIntegratesToOne) {
  const auto& g = fixtures::small_gibbs();
  for (std::size_t k = 0; k < g.rho.size(); ++k) EXPECT_NEAR(g.nu[k].integrate(g.rho[k]), 1.0, 1e-10) << k;
}

TEST(Gibbs, LambdaIsTheMassOfTheTransferredOne) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  for (std::size_t k = 0; k < g.lambda.size(); ++k) {
    EXPECT_GT(g.lambda[k], 0.0);
    EXPECT_NEAR(g.lambda[k], g.nu[k + 1].integrate(w.ops[k].one()), 1e-12 * g.lambda[k]);
  }
}

TEST(Gibbs, FamilyIsConformalOnItsOwnGrids) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  for (std::size_t k : {0u, 7u, 20u}) {
    auto gs = random_fields(*w.grids[k], 5, 100 + k);
    EXPECT_LE(conformality_residual(w.ops[k], g.nu[k], g.nu[k + 1], g.lambda[k], gs), 1e-12);
  }
}

TEST(Gibbs, DensityIsEquivariant) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  for (std::size_t k : {3u, 30u}) {
    auto Lr = w.ops[k].apply(g.rho[k].values);
    for (std::size_t i = 0; i < Lr.size(); ++i)
      EXPECT_NEAR(Lr[i], g.lambda[k] * g.rho[k + 1].values[i], 1e-12 * (1 + std::abs(Lr[i])));
  }
}

TEST(Gibbs, BoundedLipschitzDistanceBasics) {
  const auto& g = fixtures::small_gibbs();
  EXPECT_EQ(bl_distance(g.nu[5], g.nu[5]), 0.0);
  EXPECT_EQ(bl_distance(g.nu[5], g.nu[6]), bl_distance(g.nu[6], g.nu[5]));
  // two atoms 0.3 apart next to a bump center: the bump sees the full shift
  const cplx p[] = {cplx(4, 2)}, q[] = {cplx(4.3, 2)};
  const double one[] = {1.0};
  EXPECT_NEAR(bl_distance(p, one, q, one), 0.3, 1e-14);
  // test functions are bounded by 1, so the distance never exceeds total variation
  const auto& a = g.nu[10];
  auto b = GridMeasure::uniform(a.grid);
  double tv = 0;
  for (std::size_t i = 0; i < a.weights.size(); ++i) tv += std::abs(a.weights[i] - b.weights[i]);
  EXPECT_LE(bl_distance(a, b), tv + 1e-12);
}

TEST(Gibbs, DepthGaugeShrinks) {
  const auto& w = fixtures::small_window();
  std::size_t depths[] = {5, 10, 15};
  auto gauge = depth_gauge(w, 0, depths);
  EXPECT_TRUE(gauge.decreasing);
  EXPECT_EQ(gauge.distance.size(), 3u);
}

TEST(Gibbs, ReferenceMeasureIsForgotten) {
  const auto& w = fixtures::small_window();
  auto a = conformal_measure(w, 0, 30);
  auto b = conformal_measure(w, 0, 30, {Reference::HeaviestAtom, 10.0});
  auto c = conformal_measure(w, 0, 30, {Reference::UniformAll, 0});
  EXPECT_LE(bl_distance(a.nu, b.nu), 2e-3);
  EXPECT_LE(bl_distance(a.nu, c.nu), 2e-3);
}

TEST(Gibbs, ConformalityAcrossIndependentPullbacks) {
  const auto& w = fixtures::small_window();
  auto nu_x = conformal_measure(w, 0, 25);
  auto nu_next = conformal_measure(w, 1, 30);
  const double lam = nu_next.nu.integrate(w.ops[0].one());
  EXPECT_LE(conformality_residual(w.ops[0], nu_x.nu, nu_next.nu, lam, random_fields(*w.grids[0], 10, 7)), 5e-3);
}

TEST(Gibbs, ConformalityRejectsForeignMeasures) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  EXPECT_THROW(conformality_residual(w.ops[0], g.nu[1], g.nu[1], 1.0, {}), error);
}

TEST(Gibbs, FamilyIsTight) {
  const auto& g = fixtures::small_gibbs();
  auto tr = tightness_check(std::span(g.nu).first(15), 10.0, std::vector<double>{10, 14, 19, 26});
  EXPECT_TRUE(tr.pass);
  EXPECT_GE(tr.min_inner_mass, 0.5);
  EXPECT_GT(tr.eps_feasible, 0.0);
}

TEST(Gibbs, DensityIteratesConvergeGeometrically) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  auto dc = invariant_density(w, g.lambda, 39, 35, w.potential.beta, 0.01);
  ASSERT_EQ(dc.diff.size(), 35u);
  EXPECT_LT(dc.fit.rate, 1.0);
  EXPECT_TRUE(dc.geometric);
  for (double v : dc.rho.values) EXPECT_GT(v, 0.0);
}

TEST(Gibbs, UniformBoundReportShape) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  std::size_t targets[] = {30, 39};
  auto ub = uniform_bound_check(w, g.lambda, targets, 1, 20);
  ASSERT_EQ(ub.n.size(), 20u);
  for (double m : ub.max_value) EXPECT_GT(m, 0.0);
  EXPECT_EQ(ub.M_emp, *std::max_element(ub.max_value.begin(), ub.max_value.end()));
  std::size_t bad[] = {5};
  EXPECT_THROW(uniform_bound_check(w, g.lambda, bad, 1, 20), error);
}

TEST(Gibbs, LowerBoundMinimumShrinksWithRadius) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  std::vector<std::size_t> fibers{0, 1, 2, 3, 4};
  std::vector<double> radii{5, 8, 12, 18};
  auto lb = lower_bound_diagnostics(w, g, fibers, radii, GrowthProfile{}, 0.5);
  ASSERT_EQ(lb.measured_min.size(), radii.size());
  for (std::size_t i = 1; i < radii.size(); ++i) EXPECT_LE(lb.measured_min[i], lb.measured_min[i - 1]);
  EXPECT_GT(lb.measured_min.back(), 0.0);
  EXPECT_GE(lb.A_emp, 1.0);
  std::vector<double> small{2.0};
  EXPECT_THROW(lower_bound_diagnostics(w, g, fibers, small, GrowthProfile{}, 0.5), error);
}
