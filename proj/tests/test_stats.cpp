#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>

#include "rtd/stats.hpp"
#include "support.hpp"

using namespace rtd;

namespace {

double clamped_re(cplx z) { return std::clamp(z.real(), 0.0, 10.0); }

// μ_j-weighted mass pushed one chain step, built straight from the operator rows:
// out(r) = Σ_i p(i) ν_{j+1}(r) P[r,i] / (λ_j ν_j(i)).
std::vector<double> push_forward(const OrbitWindow& w, const GibbsFamily& gf, std::size_t j,
                                 std::span<const double> p) {
  const auto& op = w.ops[j];
  std::vector<double> out(op.rows(), 0.0);
  for (std::size_t r = 0; r < op.rows(); ++r) {
    auto cs = op.row_cols(r);
    auto vs = op.row_vals(r);
    for (std::size_t q = 0; q < cs.size(); ++q) {
      const double nu = gf.nu[j].weights[cs[q]];
      if (nu > 0) out[r] += p[cs[q]] * gf.nu[j + 1].weights[r] * vs[q] / (gf.lambda[j] * nu);
    }
  }
  return out;
}

}  // namespace

TEST(Stats, ChainIsStochastic) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  GridChain chain(w, g);
  for (std::size_t j = 0; j < w.count(); ++j) EXPECT_LE(chain.stochastic_defect(j), 1e-12) << j;
}

TEST(Stats, ChainCarriesInvariantMeasureForward) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  for (std::size_t j : {0u, 12u, 30u}) {
    auto pushed = push_forward(w, g, j, invariant_weights(g, j));
    auto next = invariant_weights(g, j + 1);
    for (std::size_t r = 0; r < next.size(); ++r) EXPECT_NEAR(pushed[r], next[r], 1e-12);
  }
}

TEST(Stats, ChainStepSamplesTheTransitionLaw) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  GridChain chain(w, g);
  const std::size_t j = 5;
  auto next = invariant_weights(g, j + 1);
  double p = 0;  // μ_{j+1} of the right half plane Re z > 3
  for (std::size_t r = 0; r < next.size(); ++r)
    if (w.grids[j + 1]->points[r].real() > 3) p += next[r];
  const std::size_t N = 20000;
  std::size_t hits = 0;
  for (std::size_t t = 0; t < N; ++t) {
    auto rng = trajectory_rng(9, t);
    auto x = chain.step(j, chain.start(j, rng), rng);
    hits += w.grids[j + 1]->points[x].real() > 3;
  }
  EXPECT_NEAR(double(hits) / N, p, 5 * std::sqrt(p * (1 - p) / N));
}

TEST(Stats, OperatorCorrelationsMatchForwardPropagation) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  const std::size_t j = 2, n_max = 6;
  auto h = centered_on(w, g, j, clamped_re);
  auto ops = operator_correlations(w, g, j, h, clamped_re, n_max);
  auto p = invariant_weights(g, j);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] *= h[i];
  for (std::size_t n = 0; n <= n_max; ++n) {
    auto gv = sample_on(*w.grids[j + n], clamped_re);
    double oracle = 0;
    for (std::size_t i = 0; i < p.size(); ++i) oracle += p[i] * gv[i];
    EXPECT_NEAR(ops[n], oracle, 1e-11 * (1 + std::abs(oracle))) << n;
    if (n < n_max) p = push_forward(w, g, j + n, p);
  }
}

TEST(Stats, CenteredObservableHasZeroMean) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  auto h = centered_on(w, g, 7, clamped_re);
  auto mu = invariant_weights(g, 7);
  double m = 0;
  for (std::size_t i = 0; i < h.size(); ++i) m += mu[i] * h[i];
  EXPECT_NEAR(m, 0.0, 1e-12);
}

TEST(Stats, CorrelationsDecayGeometrically) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  std::vector<std::size_t> starts{0, 1, 2, 3, 4};
  auto rep = correlation(w, g, starts, clamped_re, clamped_re, 20);
  ASSERT_TRUE(rep.fitted);
  EXPECT_LT(rep.fit.rate, 1.0);
  EXPECT_GE(rep.fit.r2, 0.9);
  EXPECT_EQ(rep.pairing, "(inf,1)");
}

TEST(Stats, MonteCarloAgreesWithOperator) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  GridChain chain(w, g);
  const std::size_t j = 3;
  auto h = centered_on(w, g, j, clamped_re);
  auto ops = operator_correlations(w, g, j, h, clamped_re, 5);
  std::size_t ns[] = {1, 2, 5};
  auto mc = monte_carlo_correlation(w, chain, j, h, clamped_re, ns, 20000, 11);
  for (std::size_t q = 0; q < 3; ++q) EXPECT_LE(std::abs(mc.mean[q] - ops[ns[q]]), 4 * mc.standard_error[q]) << ns[q];
}

TEST(Stats, KolmogorovSurvivalKnownValues) {
  // scipy.special.kolmogorov
  EXPECT_NEAR(kolmogorov_survival(1.0), 0.26999967167735456, 1e-12);
  EXPECT_NEAR(kolmogorov_survival(1.36), 0.049485876755377876, 1e-12);
  EXPECT_NEAR(kolmogorov_survival(0.5), 0.9639452436648751, 1e-12);
  EXPECT_EQ(kolmogorov_survival(0.0), 1.0);
}

TEST(Stats, KsAcceptsNormalQuantilesAndRejectsShift) {
  boost::math::normal_distribution<double> nd(0.0, 2.0);
  std::vector<double> x;
  for (int i = 1; i <= 999; ++i) x.push_back(quantile(nd, i / 1000.0));
  auto ok = ks_normal(x, 2.0);
  EXPECT_LT(ok.statistic, 2e-3);
  EXPECT_GT(ok.p_value, 0.99);
  for (double& v : x) v += 0.5;
  EXPECT_LT(ks_normal(x, 2.0).p_value, 1e-6);
  EXPECT_THROW(ks_normal({1.0}, 1.0), error);
}

TEST(Stats, IidFixturePasses) {
  auto rep = iid_fixture_clt(200, 2000, 3);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.normalized_sums.size(), 2000u);
  double var = 0;
  for (double s : rep.normalized_sums) var += s * s / 2000;
  EXPECT_NEAR(var, 1.0 / 3.0, 0.05);
}

TEST(Stats, KoopmanDualFixesConstants) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  for (std::size_t j : {0u, 20u}) {
    auto v = koopman_dual_apply(w, g, j, std::vector<double>(w.grids[j]->size(), 1.0));
    for (double x : v) EXPECT_NEAR(x, 1.0, 1e-12);
  }
}

TEST(Stats, GordinTermsOfCenteredObservableDecay) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  auto rep = gordin_terms(w, g, 0, centered_on(w, g, 0, ConjugationOdd{}), 20);
  ASSERT_EQ(rep.terms.size(), 21u);
  ASSERT_TRUE(rep.fitted);
  EXPECT_LT(rep.fit.rate, 1.0);
  EXPECT_LT(rep.terms.back(), 1e-3 * rep.terms.front());
}

TEST(Stats, GreenKuboSettlesAndStartsAtTheVariance) {
  const auto& w = fixtures::small_window();
  const auto& g = fixtures::small_gibbs();
  std::size_t starts[] = {0, 4, 8};
  auto gk = green_kubo(w, g, starts, ConjugationOdd{});
  double var = 0;
  for (std::size_t j : starts) {
    auto psi = centered_on(w, g, j, ConjugationOdd{});
    auto mu = invariant_weights(g, j);
    for (std::size_t i = 0; i < psi.size(); ++i) var += mu[i] * psi[i] * psi[i] / 3;
  }
  EXPECT_NEAR(gk.corr[0], var, 1e-12);
  EXPECT_GT(gk.sigma2, 0.0);
  EXPECT_LE(std::abs(gk.sigma2_doubled - gk.sigma2), 0.05 * gk.sigma2);
  EXPECT_EQ(gk.corr.size(), 2 * gk.k_max + 1);
}
