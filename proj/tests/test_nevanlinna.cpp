#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <random>

#include "rtd/nevanlinna.hpp"

using namespace rtd;

namespace {

const cplx targets[] = {{1, 1}, {-1, 0.5}, {3, 0}, {0, -2}, {0.5, 0}};
const double radii[] = {1, 2, 5, 10, 20};

}  // namespace

TEST(Nevanlinna, ChordalDistanceSpecialValues) {
  EXPECT_NEAR(chordal_distance(cplx(0), ExtendedComplex::infinity()), 1.0, 1e-15);
  EXPECT_NEAR(chordal_distance(cplx(0), cplx(1)), 1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(chordal_distance(cplx(1), ExtendedComplex::infinity()), 1 / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(chordal_distance(ExtendedComplex::infinity(), ExtendedComplex::infinity()), 0.0);
}

TEST(Nevanlinna, ChordalDistanceIsAMetric) {
  std::mt19937_64 rng(5);
  std::cauchy_distribution<double> c(0, 2);
  for (int i = 0; i < 10000; ++i) {
    ExtendedComplex a(cplx(c(rng), c(rng))), b(cplx(c(rng), c(rng))), d(cplx(c(rng), c(rng)));
    if (i % 97 == 0) d = ExtendedComplex::infinity();
    const double ab = chordal_distance(a, b), bd = chordal_distance(b, d), ad = chordal_distance(a, d);
    EXPECT_EQ(ab, chordal_distance(b, a));
    EXPECT_LE(ad, ab + bd + 1e-12);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
  }
}

TEST(Nevanlinna, CharacteristicMatchesIndependentQuadrature) {
  // oracle: scipy dblquad of the spherical density in polar form, then ∫A(t)/t dt
  auto f = FiberMap::exp(0.2);
  const double r[] = {1.0, 5.0};
  auto tab = characteristic(f, r);
  EXPECT_NEAR(tab.value[0], 0.02206451320024796, 1e-7);
  EXPECT_NEAR(tab.value[1], 0.8786560860858169, 1e-7);
  EXPECT_NEAR(tab.area[1], 1.4734102269621374, 1e-7);
}

TEST(Nevanlinna, CharacteristicIsMonotone) {
  std::vector<double> r;
  for (int i = 1; i <= 30; ++i) r.push_back(0.5 * i);
  for (auto f : {FiberMap::exp(0.2), FiberMap::tangent(0.6), FiberMap::square()}) {
    auto tab = characteristic(f, r);
    for (std::size_t i = 1; i < r.size(); ++i) EXPECT_GE(tab.value[i], tab.value[i - 1]);
  }
}

TEST(Nevanlinna, OrderOfExpIsOne) {
  std::vector<double> r;
  for (int i = 0; i <= 30; ++i) r.push_back(std::pow(10.0, 0.5 + 2.0 * i / 30));
  EXPECT_NEAR(order_estimate(characteristic(FiberMap::exp(0.2), r)), 1.0, 0.05);
}

TEST(Nevanlinna, OrderOfLinearMapVanishes) {
  // T̊ = ½ log(1 + r²) for the identity
  std::vector<double> r;
  for (int i = 0; i <= 30; ++i) r.push_back(std::pow(10.0, 1.0 + 2.0 * i / 30));
  auto tab = characteristic(FiberMap::linear(1.0), r);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(tab.value[i], 0.5 * std::log1p(r[i] * r[i]), 1e-6);
  EXPECT_LT(order_estimate(tab), 0.2);
}

TEST(Nevanlinna, CountingMatchesLatticeOracle) {
  // oracle: mpmath sum of log(r/|log(1/η) + 2πik|) over the lattice
  auto f = FiberMap::exp(0.2);
  EXPECT_NEAR(counting(f, cplx(1.0), 20.0).N, 5.7963755351129375, 1e-10);
}

TEST(Nevanlinna, CountingEqualsIntegralOfCountingNumber) {
  auto f = FiberMap::exp(0.2);
  const cplx w(1, 1);
  const double r = 20;
  double err = 0;
  // n(0, w) = 0 since f(0) ≠ w
  auto n_of = [&](double t) { return double(counting(f, w, t).n) / t; };
  double moduli_integral = 0, prev = 0;
  for (double m : detail::preimage_moduli_within(f, w, r)) {
    moduli_integral += boost::math::quadrature::gauss_kronrod<double, 15>::integrate(n_of, std::max(prev, 1e-9), m,
                                                                                      15, 1e-12, &err);
    prev = m;
  }
  moduli_integral += boost::math::quadrature::gauss_kronrod<double, 15>::integrate(n_of, prev, r, 15, 1e-12, &err);
  EXPECT_NEAR(counting(f, w, r).N, moduli_integral, 1e-8);
}

TEST(Nevanlinna, FirstMainTheoremMargins) {
  auto f = FiberMap::exp(0.2);
  for (cplx w : targets) {
    auto rep = fmt_check(f, w, radii);
    EXPECT_TRUE(rep.pass);
    EXPECT_GE(rep.min_margin, -1e-3);
  }
  EXPECT_THROW(fmt_check(f, cplx(0.2), radii), error);  // f(0) = w
}

TEST(Nevanlinna, TailSumClosedForm) {
  auto t = tail_sum(FiberMap::exp(0.2), cplx(0.2), 2.0, 1.0);
  EXPECT_NEAR(t.direct, 1.0 / 12.0, 1e-8);
  EXPECT_NEAR(t.stieltjes, 1.0 / 12.0, 1e-8);
}

TEST(Nevanlinna, TailSumDualMethodsAgree) {
  auto f = FiberMap::exp(0.2);
  for (double s : {1.5, 2.0, 3.0})
    for (double R : {1.0, 5.0, 10.0})
      for (cplx w : {cplx(0.2), cplx(1, 1), cplx(-3, 0.5)}) EXPECT_LE(tail_sum(f, w, s, R).rel_diff, 1e-8);
}

TEST(Nevanlinna, TailSumAtRadiusTen) {
  // Σ_{|2πk| > 10} (2πk)^{-2} over both signs of k: 2 Σ_{k ≥ 2}
  double oracle = 0;
  for (int k = 2; k < 2000000; ++k) oracle += 2.0 / (4 * pi * pi * double(k) * double(k));
  oracle += 2.0 / (4 * pi * pi * 2000000.0);
  EXPECT_NEAR(tail_sum(FiberMap::exp(0.2), cplx(0.2), 2.0, 10.0).direct, oracle, 1e-9);
}

TEST(Nevanlinna, TailSumDivergenceGuard) {
  try {
    tail_sum(FiberMap::exp(0.2), cplx(1), 1.0, 1.0);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::divergence);
  }
}

TEST(Nevanlinna, DiscrepancyOfZeroOneInfinity) {
  std::array<ExtendedComplex, 3> a{cplx(0), cplx(1), ExtendedComplex::infinity()};
  EXPECT_NEAR(smt_discrepancy(a), 3 * std::log(2.0), 1e-14);
  std::array<ExtendedComplex, 3> same{cplx(0), cplx(0), cplx(1)};
  EXPECT_THROW(smt_discrepancy(same), error);
}

TEST(Nevanlinna, SmtFullExpressionPlugIn) {
  SmtErrorConfig c;
  c.L = 2;
  c.order = 1;
  c.coefficient = 1;
  const double r0 = 2 * std::exp(std::exp(1.0));
  c.b6 = calibrate_b6(c, 10 * r0);
  std::array<ExtendedComplex, 3> a{cplx(0), cplx(1), ExtendedComplex::infinity()};
  auto s = smt_error_term(c, std::exp(1.0), a, r0);
  // second evaluation path, written out term by term
  const double b1 = std::exp(1.0) * (1 + r0 * r0);
  const double expect = 2 * std::log(108 + 18 * std::log(2.0)) + 0.5 * std::log(b1) + 1 + 4 * 1.0 +
                        0.5 * std::log(r0) + std::log(2.0) + 3 * std::log(2.0);
  EXPECT_NEAR(s.full, expect, 1e-12);
  EXPECT_TRUE(s.full_le_simplified);
  EXPECT_THROW(smt_error_term(c, std::exp(1.0), a, r0 / 2), error);
}

TEST(Nevanlinna, SmtLowerBoundOnExp) {
  auto f = FiberMap::exp(0.2);
  SmtErrorConfig c;
  c.L = 1.0 / spherical_deriv(f, 0.0) * 1.01;
  c.coefficient = 1;
  const double r0 = c.r0();
  c.b6 = calibrate_b6(c, 4 * r0);
  std::array<ExtendedComplex, 3> a{cplx(0.1), cplx(0.1, 0.05), cplx(0.1, -0.05)};
  const double r[] = {r0, 1.5 * r0, 2 * r0, 3 * r0};
  auto rep = smt_lower_bound_check(f, a, r, c);
  EXPECT_TRUE(rep.pass);
  SmtErrorConfig tight = c;
  tight.L = 1.0;
  EXPECT_THROW(smt_lower_bound_check(f, a, r, tight), error);
}
