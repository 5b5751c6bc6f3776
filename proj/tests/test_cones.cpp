#include <gtest/gtest.h>

#include "rtd/cones.hpp"
#include "rtd/distortion.hpp"
#include "rtd/observables.hpp"
#include "support.hpp"

using namespace rtd;

namespace {

// Constants measured on the small window, anchored at fiber 0.
const ConeConstants& measured_constants() {
  static const ConeConstants k = [] {
    const auto& w = fixtures::small_window();
    const auto& g = fixtures::small_gibbs();
    auto ex = expansion_constants(w.grids, 10);
    std::size_t targets[] = {39};
    auto ub = uniform_bound_check(w, g.lambda, targets, 1, 20);
    std::size_t dn[] = {1, 2};
    const double K = distortion_check(w, 39, dn, w.julia.cover(), 1.5).K.front();
    const double delta = variation_scale(ub.M_emp, K, 0.5, 1.5);
    std::vector<std::size_t> fibers{0, 5};
    std::vector<double> r0{10.0};
    auto lb = lower_bound_diagnostics(w, g, fibers, r0, GrowthProfile{}, delta);
    return compute_constants({ub.M_emp, K, lb.A_emp, ex.c, ex.gamma, 1.0}, 0.5, 1.5, 10.0);
  }();
  return k;
}

}  // namespace

TEST(Cones, VariationScaleFormula) {
  // (1/2 / (2·1.2·3 + 4))²
  EXPECT_NEAR(variation_scale(1.2, 3.0, 0.5, 1.5), 0.0019929846938775511, 1e-17);
  EXPECT_EQ(variation_scale(0.01, 0.01, 0.5, 1e-3), 1e-3);
  const double d = variation_scale(2.0, 1.5, 0.7, 10.0);
  EXPECT_NEAR(0.5 + (2 * 2.0 * 1.5 + 4) * std::pow(d, 0.7), 1.0, 1e-12);
}

TEST(Cones, ConstantsMatchBruteForce) {
  EmpiricalInputs in{1.2, 3.0, 5.0, 0.8, 2.5, 0.1};
  auto k = compute_constants(in, 0.5, 1.5, 10.0);
  EXPECT_EQ(k.calA, 10.0);
  EXPECT_NEAR(k.H, 76.0, 1e-12);
  int n = 1;
  while (1.2 * 3.0 * std::pow(0.8 * std::pow(2.5, n), -0.5) * 76.0 > 1) ++n;
  EXPECT_EQ(k.N0, n);
  EXPECT_EQ(k.N0, 13);
  EXPECT_NEAR(k.eta, 1.0 / 76.0, 1e-15);
  in.a = 0.01;  // the mixing floor now binds
  EXPECT_NEAR(compute_constants(in, 0.5, 1.5, 10.0).eta, 0.01 / 2.4, 1e-15);
}

TEST(Cones, ConstantsRejectDegenerateInputs) {
  EXPECT_THROW(compute_constants({1, 1, 1, 1, 1.0, 1}, 0.5, 1, 10), error);
  EXPECT_THROW(compute_constants({0, 1, 1, 1, 2.0, 1}, 0.5, 1, 10), error);
  EXPECT_THROW(compute_constants({1, 1, 1, 1, 2.0, std::nan("")}, 0.5, 1, 10), error);
}

TEST(Cones, NormalizedOneHasUnitIntegral) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  for (std::size_t j = 1; j <= w.count(); ++j) EXPECT_NEAR(g.nu[j].integrate(normalized_one(w, g.lambda, j)), 1.0, 1e-12);
  EXPECT_THROW(normalized_one(w, g.lambda, 0), error);
}

TEST(Cones, MembershipOfSimpleDensities) {
  const auto& g = fixtures::small_gibbs();
  const auto& k = measured_constants();
  const std::size_t n = g.nu[3].weights.size();
  auto one = cone_membership(std::vector<double>(n, 1.0), g.nu[3], k);
  EXPECT_TRUE(one.in_C);
  EXPECT_NEAR(one.integral, 1.0, 1e-12);
  EXPECT_EQ(one.slack_holder, k.H);
  auto neg = cone_membership(std::vector<double>(n, -1.0), g.nu[3], k);
  EXPECT_FALSE(neg.in_C);
  EXPECT_FALSE(neg.nonnegative);
  EXPECT_TRUE(cone_membership(std::vector<double>(n, 0.0), g.nu[3], k).zero);
  EXPECT_THROW(cone_membership(std::vector<double>(n + 1, 1.0), g.nu[3], k), error);
}

TEST(Cones, SampledMembersAreNormalizedWithSlack) {
  const auto& g = fixtures::small_gibbs();
  const auto& k = measured_constants();
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto m = sample_cone_member(g.nu[0], k, s);
    auto mem = cone_membership(m, g.nu[0], k);
    EXPECT_NEAR(mem.integral, 1.0, 1e-10);
    EXPECT_TRUE(mem.in_C);
    EXPECT_GE(mem.slack_sup, k.calA * (1 - 1 / 1.1) - 1e-9);
  }
}

TEST(Cones, ConeIsInvariantAfterN0Steps) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  const auto& k = measured_constants();
  const std::size_t N0 = std::size_t(k.N0);
  ASSERT_LE(N0 + 1, w.count());
  std::size_t ns[] = {N0, N0 + 1};
  auto rep = cone_invariance_test(w, g, k, 0, ns, 10, 17);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.images.size(), 11u);
  for (const auto& img : rep.images) EXPECT_NEAR(g.nu[N0].integrate(img), 1.0, 1e-10);
}

TEST(Cones, BowenStepOnInvariantImages) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  ConeConstants k = measured_constants();
  const std::size_t N0 = std::size_t(k.N0);
  if (2 * N0 > w.count()) GTEST_SKIP() << "window too short for two N0 steps";
  std::size_t ns[] = {N0};
  auto rep = cone_invariance_test(w, g, k, 0, ns, 5, 23);
  k.a = mixing_floor(w, g.lambda, N0, N0, 10.0, rep.images);
  ASSERT_GT(k.a, 0.0);
  k.eta = std::min({1.0 / 3.0, 1.0 / k.H, k.a / (2 * k.M)});
  for (const auto& m : rep.images) {
    auto b = bowen_step_check(w, g, k, N0, m, N0, 10.0);
    EXPECT_TRUE(b.pass);
    EXPECT_GT(b.eta_xR, 0.0);
    EXPECT_LT(b.eta_xR, 1.0);
  }
}

TEST(Cones, OuterRadiusBoundsTheNormalizedOne) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  const auto& k = measured_constants();
  std::vector<GridDensity> ones;
  for (std::size_t j = 1; j <= 10; ++j) ones.push_back({w.grids[j], normalized_one(w, g.lambda, j)});
  const double R1 = outer_radius(ones, k);
  for (const auto& o : ones)
    for (std::size_t i = 0; i < o.size(); ++i)
      if (std::abs(o.grid->points[i]) > R1) EXPECT_LE(2 * k.calA * k.M * o.values[i], 1.0);
}

TEST(Cones, ContractionFitRecoversGeometricSequence) {
  std::vector<std::size_t> ns{1, 2, 3, 4, 5, 6};
  std::vector<double> D;
  for (std::size_t n : ns) D.push_back(2 * std::pow(0.5, double(n)));
  auto rep = contraction_from_sequence(ns, D);
  ASSERT_TRUE(rep.fitted);
  EXPECT_NEAR(rep.fit.rate, 0.5, 1e-12);
  EXPECT_NEAR(rep.fit.r2, 1.0, 1e-12);
  EXPECT_TRUE(rep.contracting);
  // entries at the floor end the fit
  D[2] = 0;
  EXPECT_FALSE(contraction_from_sequence(ns, D).fitted);
}

TEST(Cones, DifferencesOfMembersContract) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  const auto& k = measured_constants();
  std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs;
  for (std::uint64_t s = 0; s < 4; ++s)
    pairs.emplace_back(sample_cone_member(g.nu[0], k, 2 * s), sample_cone_member(g.nu[0], k, 2 * s + 1));
  std::vector<std::size_t> ns;
  for (std::size_t n = 1; n <= 20; ++n) ns.push_back(n);
  auto rep = contraction_rate(w, g.lambda, 0, pairs, ns, 0.5, 0.01);
  EXPECT_TRUE(rep.contracting);
  EXPECT_LT(rep.fit.rate, 1.0);
}

TEST(Cones, IsometryDoesNotContract) {
  std::vector<cplx> pts;
  for (int a = 0; a < 10; ++a)
    for (int b = 0; b < 10; ++b) pts.emplace_back(0.37 * a, 0.41 * b);
  std::vector<std::size_t> ns{1, 2, 3, 5, 8, 13};
  auto rep = isometry_control(pts, ns, 0.5, 0.5, 1);
  EXPECT_FALSE(rep.contracting);
  for (double d : rep.D) EXPECT_NEAR(d, rep.D.front(), 1e-12 * rep.D.front());
}

TEST(Cones, DistortionReportShape) {
  const auto& w = fixtures::small_window();
  std::size_t dn[] = {1, 2, 4};
  auto rep = distortion_check(w, 39, dn, w.julia.cover(), 1.5);
  ASSERT_EQ(rep.K.size(), 3u);
  EXPECT_GT(rep.pairs, 0u);
  for (double K : rep.K) EXPECT_GE(K, 0.0);
  std::size_t too_deep[] = {40};
  EXPECT_THROW(distortion_check(w, 39, too_deep, w.julia.cover(), 1.5), error);
}

TEST(Cones, TwoNormInequalityHolds) {
  const auto& w = fixtures::small_window();
  const auto& k = measured_constants();
  std::vector<cplx> samples;
  for (std::size_t i = 0; i < w.grids[10]->size() && samples.size() < 8; i += 37) samples.push_back(w.grids[10]->points[i]);
  RandomField rf = RandomField::make(4);
  std::vector<TestObservable> gs{{rf, 1.0, sampled_holder_constant(rf, 0.5, 30, 30, 5000, 4)}};
  std::size_t ns[] = {1, 2};
  TwoNormConfig tc{k.K, k.c, k.gamma, 0.5, 1e-6, 6, 1};
  auto rep = two_norm_check(std::span(w.maps).first(10), samples, gs, ns, w.potential, tc);
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_GE(rep.min_margin, 0.0);
  EXPECT_NEAR(rep.predicted, 0.5 * std::log(k.gamma), 1e-15);
}
