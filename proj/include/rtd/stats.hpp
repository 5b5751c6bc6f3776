#pragma once

// Decay of correlations and central-limit diagnostics for the invariant
// family μ_j = ρ_j ν_j along an orbit window.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rtd/common.hpp"
#include "rtd/fit.hpp"
#include "rtd/gibbs.hpp"
#include "rtd/observables.hpp"
#include "rtd/orbit.hpp"

namespace rtd {

inline std::vector<double> invariant_weights(const GibbsFamily& gf, std::size_t j) {
  std::vector<double> mu(gf.nu[j].weights.size());
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = gf.rho[j].values[i] * gf.nu[j].weights[i];
  return mu;
}

// ∫ a b dν
inline double pair_integral(const GridMeasure& nu, std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += nu.weights[i] * a[i] * b[i];
  return s;
}

// φ − ∫φ dμ_j on grid j.
template <class Fn>
std::vector<double> centered_on(const OrbitWindow& w, const GibbsFamily& gf, std::size_t j, Fn&& phi) {
  std::vector<double> v = sample_on(*w.grids[j], phi);
  auto mu = invariant_weights(gf, j);
  double mean = 0, mass = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    mean += mu[i] * v[i];
    mass += mu[i];
  }
  mean /= mass;
  for (double& x : v) x -= mean;
  return v;
}

// ---------------------------------------------------------------------------
// Correlations through the operator identity
//   ∫ (g∘fⁿ) h dμ_j = ∫ g ℒ̂ⁿ(h ρ_j) dν_{j+n}

// Values for n = 0..n_max of one start fiber; h must already be centered.
template <class G>
std::vector<double> operator_correlations(const OrbitWindow& w, const GibbsFamily& gf, std::size_t j,
                                          std::span<const double> h, G&& g, std::size_t n_max) {
  require(j + n_max <= w.count(), errc::precondition, "correlation horizon leaves the window");
  std::vector<double> v(h.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = h[i] * gf.rho[j].values[i];
  std::vector<double> out;
  for (std::size_t n = 0;; ++n) {
    out.push_back(pair_integral(gf.nu[j + n], sample_on(*w.grids[j + n], g), v));
    if (n == n_max) break;
    v = w.ops[j + n].apply(v);
    for (double& x : v) x /= gf.lambda[j + n];
  }
  return out;
}

struct CorrelationReport {
  std::vector<std::size_t> n;
  std::vector<double> value;  // fiber average of |∫(g∘fⁿ) h dμ|
  GeometricFit fit;
  bool fitted = false;
  std::string pairing = "(inf,1)";
};

template <class G, class H>
CorrelationReport correlation(const OrbitWindow& w, const GibbsFamily& gf, std::span<const std::size_t> starts, G&& g,
                              H&& h, std::size_t n_max, std::size_t fit_from = 1) {
  CorrelationReport rep;
  rep.value.assign(n_max + 1, 0.0);
  for (std::size_t j : starts) {
    auto hc = centered_on(w, gf, j, h);
    auto c = operator_correlations(w, gf, j, hc, g, n_max);
    for (std::size_t n = 0; n <= n_max; ++n) rep.value[n] += std::abs(c[n]) / double(starts.size());
  }
  std::vector<double> xs, vs;
  for (std::size_t n = 0; n <= n_max; ++n) {
    rep.n.push_back(n);
    if (n < fit_from) continue;
    if (rep.value[n] <= difference_floor) break;
    xs.push_back(double(n));
    vs.push_back(rep.value[n]);
  }
  if (xs.size() >= 3) {
    rep.fit = geometric_fit(xs, vs);
    rep.fitted = true;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Markov chain on the grids whose one-step law is the dual of ℒ̂:
//   T_j(i → r) = ν_{j+1}(r) P_j[r, i] / (λ_j ν_j(i)).
// It carries μ_j to μ_{j+1} exactly and reproduces the operator correlations.

class GridChain {
 public:
  GridChain(const OrbitWindow& w, const GibbsFamily& gf) : w_(&w), gf_(&gf) {
    steps_.resize(w.count());
    for (std::size_t j = 0; j < w.count(); ++j) {
      const TransferOperator& op = w.ops[j];
      Step& s = steps_[j];
      const std::size_t cols = op.cols();
      std::vector<std::size_t> count(cols + 1, 0);
      for (std::size_t r = 0; r < op.rows(); ++r)
        for (std::uint32_t c : op.row_cols(r)) ++count[c + 1];
      for (std::size_t c = 0; c < cols; ++c) count[c + 1] += count[c];
      s.offset.assign(count.begin(), count.end());
      s.target.resize(count[cols]);
      s.cumulative.resize(count[cols]);
      std::vector<std::size_t> fill(count.begin(), count.end() - 1);
      const auto& nu_next = gf.nu[j + 1].weights;
      for (std::size_t r = 0; r < op.rows(); ++r) {
        auto cs = op.row_cols(r);
        auto vs = op.row_vals(r);
        for (std::size_t q = 0; q < cs.size(); ++q) {
          std::size_t at = fill[cs[q]]++;
          s.target[at] = std::uint32_t(r);
          s.cumulative[at] = nu_next[r] * vs[q];
        }
      }
      for (std::size_t c = 0; c < cols; ++c) {
        double acc = 0;
        for (std::size_t a = s.offset[c]; a < s.offset[c + 1]; ++a) s.cumulative[a] = acc += s.cumulative[a];
        for (std::size_t a = s.offset[c]; a < s.offset[c + 1]; ++a) s.cumulative[a] /= acc > 0 ? acc : 1.0;
      }
    }
  }

  // Row-sum defect of T_j: max_i |Σ_r T_j(i→r) − 1| over atoms with ν_j(i) > 0,
  // computed from the raw weights.
  double stochastic_defect(std::size_t j) const {
    const TransferOperator& op = w_->ops[j];
    std::vector<double> col(op.cols(), 0.0);
    const auto& nu_next = gf_->nu[j + 1].weights;
    for (std::size_t r = 0; r < op.rows(); ++r) {
      auto cs = op.row_cols(r);
      auto vs = op.row_vals(r);
      for (std::size_t q = 0; q < cs.size(); ++q) col[cs[q]] += nu_next[r] * vs[q];
    }
    double worst = 0;
    const auto& nu = gf_->nu[j].weights;
    for (std::size_t i = 0; i < col.size(); ++i)
      if (nu[i] > 0) worst = std::max(worst, std::abs(col[i] / (gf_->lambda[j] * nu[i]) - 1));
    return worst;
  }

  template <class Rng>
  std::uint32_t step(std::size_t j, std::uint32_t i, Rng& rng) const {
    const Step& s = steps_[j];
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double x = u(rng);
    auto first = s.cumulative.begin() + std::ptrdiff_t(s.offset[i]);
    auto last = s.cumulative.begin() + std::ptrdiff_t(s.offset[i + 1]);
    require(first != last, errc::degenerate_density, "atom without outgoing transitions");
    auto it = std::upper_bound(first, last, x);
    if (it == last) --it;
    return s.target[std::size_t(it - s.cumulative.begin())];
  }

  // Draws from μ_j by weight.
  template <class Rng>
  std::uint32_t start(std::size_t j, Rng& rng) const {
    auto& cdf = start_cdf(j);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u(rng));
    if (it == cdf.end()) --it;
    return std::uint32_t(it - cdf.begin());
  }

 private:
  struct Step {
    std::vector<std::size_t> offset;
    std::vector<std::uint32_t> target;
    std::vector<double> cumulative;
  };

  const std::vector<double>& start_cdf(std::size_t j) const {
    if (cdf_.size() <= j) cdf_.resize(j + 1);
    auto& c = cdf_[j];
    if (c.empty()) {
      c = invariant_weights(*gf_, j);
      double acc = 0;
      for (double& v : c) v = acc += v;
      for (double& v : c) v /= acc;
    }
    return c;
  }

  const OrbitWindow* w_;
  const GibbsFamily* gf_;
  std::vector<Step> steps_;
  mutable std::vector<std::vector<double>> cdf_;
};

inline std::mt19937_64 trajectory_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(index), std::uint32_t(index >> 32)};
  return std::mt19937_64(seq);
}

struct MonteCarloCorrelation {
  std::vector<std::size_t> n;
  std::vector<double> mean, standard_error;
};

// E[g(X_n) h(X_0)] with X_0 ~ μ_j; h must already be centered on grid j.
template <class G>
MonteCarloCorrelation monte_carlo_correlation(const OrbitWindow& w, const GridChain& chain, std::size_t j,
                                              std::span<const double> h, G&& g, std::span<const std::size_t> ns,
                                              std::size_t trajectories, std::uint64_t seed) {
  const std::size_t n_max = *std::max_element(ns.begin(), ns.end());
  require(j + n_max <= w.count(), errc::precondition, "trajectory leaves the window");
  std::vector<std::vector<double>> gv(n_max + 1);
  for (std::size_t n : ns) gv[n] = sample_on(*w.grids[j + n], g);
  std::vector<double> sum(ns.size(), 0.0), sum2(ns.size(), 0.0);
  for (std::size_t t = 0; t < trajectories; ++t) {
    auto rng = trajectory_rng(seed, t);
    std::uint32_t x0 = chain.start(j, rng), x = x0;
    std::size_t at = 0;
    for (std::size_t q = 0; q < ns.size(); ++q) {
      for (; at < ns[q]; ++at) x = chain.step(j + at, x, rng);
      const double v = gv[ns[q]][x] * h[x0];
      sum[q] += v;
      sum2[q] += v * v;
    }
  }
  MonteCarloCorrelation mc;
  const double N = double(trajectories);
  for (std::size_t q = 0; q < ns.size(); ++q) {
    const double m = sum[q] / N;
    const double var = std::max(0.0, sum2[q] / N - m * m) * N / (N - 1);
    mc.n.push_back(ns[q]);
    mc.mean.push_back(m);
    mc.standard_error.push_back(std::sqrt(var / N));
  }
  return mc;
}

// ---------------------------------------------------------------------------
// Kolmogorov–Smirnov against a centered normal

struct KsResult {
  double statistic = 0;
  double p_value = 1;
};

// P(K > x) for the Kolmogorov limit law.
inline double kolmogorov_survival(double x) {
  if (x <= 0) return 1.0;
  if (x < 0.2) return 1.0;
  double s = 0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-17) break;
  }
  return std::clamp(2 * s, 0.0, 1.0);
}

inline KsResult ks_normal(std::vector<double> x, double sigma) {
  require(x.size() >= 2 && sigma > 0, errc::insufficient_samples, "KS needs samples and a positive σ");
  std::sort(x.begin(), x.end());
  const double n = double(x.size());
  double D = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double F = 0.5 * std::erfc(-x[i] / (sigma * std::sqrt(2.0)));
    D = std::max({D, double(i + 1) / n - F, F - double(i) / n});
  }
  const double sn = std::sqrt(n);
  return {D, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * D)};
}

// ---------------------------------------------------------------------------
// Birkhoff sums and the CLT

struct GreenKubo {
  double sigma2 = 0;
  std::size_t k_max = 0;           // first k with every fiber's |corr_k| < threshold
  double sigma2_doubled = 0;       // with the sum carried to 2 k_max
  std::vector<double> corr;        // fiber-averaged corr_k, k = 0..2 k_max
};

// σ² = Var₀ + 2 Σ_{k ≤ k_max} corr_k, averaged over start fibers.
template <class Fn>
GreenKubo green_kubo(const OrbitWindow& w, const GibbsFamily& gf, std::span<const std::size_t> starts, Fn&& phi,
                     double threshold = 1e-4, std::size_t k_cap = 200) {
  GreenKubo gk;
  std::vector<std::vector<double>> per(starts.size());
  std::size_t k_stop = k_cap;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    const std::size_t j = starts[s];
    const std::size_t horizon = std::min(k_cap, w.count() - j);
    auto psi = centered_on(w, gf, j, phi);
    std::vector<double> v(psi.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = psi[i] * gf.rho[j].values[i];
    for (std::size_t k = 0; k <= horizon; ++k) {
      auto pk = k == 0 ? psi : centered_on(w, gf, j + k, phi);
      per[s].push_back(pair_integral(gf.nu[j + k], pk, v));
      if (k == horizon) break;
      v = w.ops[j + k].apply(v);
      for (double& x : v) x /= gf.lambda[j + k];
    }
  }
  std::size_t common = k_cap;
  for (const auto& p : per) common = std::min(common, p.size() - 1);
  gk.corr.assign(common + 1, 0.0);
  for (const auto& p : per)
    for (std::size_t k = 0; k <= common; ++k) gk.corr[k] += p[k] / double(per.size());
  k_stop = common;
  for (std::size_t k = 1; k <= common; ++k) {
    bool small = std::all_of(per.begin(), per.end(), [&](const auto& p) { return std::abs(p[k]) < threshold; });
    if (small) {
      k_stop = k;
      break;
    }
  }
  require(2 * k_stop <= common, errc::insufficient_samples, "correlation sum does not settle inside the window");
  gk.k_max = k_stop;
  auto partial = [&](std::size_t K) {
    double s = gk.corr[0];
    for (std::size_t k = 1; k <= K; ++k) s += 2 * gk.corr[k];
    return s;
  };
  gk.sigma2 = partial(k_stop);
  gk.sigma2_doubled = partial(2 * k_stop);
  gk.corr.resize(2 * k_stop + 1);
  return gk;
}

struct CltReport {
  std::size_t n = 0;
  std::size_t samples = 0;
  double sigma2 = 0;
  double sigma2_doubled = 0;
  std::size_t k_max = 0;
  KsResult ks;
  bool coboundary = false;
  std::vector<double> normalized_sums;  // S_n / √n per sample
  bool pass = false;                    // p > 0.01 and σ² stable within 5%
};

// Trajectories of the grid chain from μ_start, ψ_j = φ − ∫φ dμ_j.
template <class Fn>
CltReport birkhoff_clt(const OrbitWindow& w, const GibbsFamily& gf, const GridChain& chain, std::size_t start,
                       Fn&& phi, std::size_t n, std::size_t samples, std::uint64_t seed,
                       std::span<const std::size_t> gk_starts) {
  require(samples >= 500, errc::insufficient_samples, "CLT needs at least 500 samples");
  require(start + n <= w.count(), errc::precondition, "trajectory leaves the window");
  CltReport rep;
  rep.n = n;
  rep.samples = samples;
  std::vector<std::vector<double>> psi(n);
  for (std::size_t k = 0; k < n; ++k) psi[k] = centered_on(w, gf, start + k, phi);
  for (std::size_t t = 0; t < samples; ++t) {
    auto rng = trajectory_rng(seed, t);
    std::uint32_t x = chain.start(start, rng);
    double S = 0;
    for (std::size_t k = 0; k < n; ++k) {
      S += psi[k][x];
      if (k + 1 < n) x = chain.step(start + k, x, rng);
    }
    rep.normalized_sums.push_back(S / std::sqrt(double(n)));
  }
  GreenKubo gk = green_kubo(w, gf, gk_starts, phi);
  rep.sigma2 = gk.sigma2;
  rep.sigma2_doubled = gk.sigma2_doubled;
  rep.k_max = gk.k_max;
  rep.coboundary = !(rep.sigma2 > 1e-10);
  if (!rep.coboundary) rep.ks = ks_normal(rep.normalized_sums, std::sqrt(rep.sigma2));
  const bool stable = std::abs(rep.sigma2_doubled - rep.sigma2) <= 0.05 * rep.sigma2;
  rep.pass = !rep.coboundary && rep.ks.p_value > 0.01 && stable;
  return rep;
}

// Oracle sanity: maps that ignore their input, ψ i.i.d. uniform on [-1, 1],
// σ² = 1/3.
inline CltReport iid_fixture_clt(std::size_t n, std::size_t samples, std::uint64_t seed) {
  CltReport rep;
  rep.n = n;
  rep.samples = samples;
  rep.sigma2 = rep.sigma2_doubled = 1.0 / 3.0;
  for (std::size_t t = 0; t < samples; ++t) {
    auto rng = trajectory_rng(seed, t);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double S = 0;
    for (std::size_t k = 0; k < n; ++k) S += u(rng);
    rep.normalized_sums.push_back(S / std::sqrt(double(n)));
  }
  rep.ks = ks_normal(rep.normalized_sums, std::sqrt(rep.sigma2));
  rep.pass = rep.ks.p_value > 0.01;
  return rep;
}

// U*ψ = ℒ̂_j(ρ_j ψ) / ρ_{j+1} on grid j+1.
inline std::vector<double> koopman_dual_apply(const OrbitWindow& w, const GibbsFamily& gf, std::size_t j,
                                              std::span<const double> psi) {
  const auto& rho = gf.rho[j].values;
  const auto& rho_next = gf.rho[j + 1].values;
  for (double r : rho_next) require(r >= 1e-12, errc::degenerate_density, "ρ vanishes on the grid");
  std::vector<double> v(psi.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = rho[i] * psi[i];
  v = w.ops[j].apply(v);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] /= gf.lambda[j] * rho_next[i];
  return v;
}

struct GordinReport {
  std::vector<double> terms;  // ‖U*ᵏψ‖_{L²(μ_{j+k})}
  std::vector<double> partial_sums;
  GeometricFit fit;
  bool fitted = false;
};

// ‖UᵏU*ᵏψ‖ = ‖U*ᵏψ‖ since the Koopman operator is an isometry.
inline GordinReport gordin_terms(const OrbitWindow& w, const GibbsFamily& gf, std::size_t j, std::vector<double> psi,
                                 std::size_t k_max) {
  GordinReport rep;
  double acc = 0;
  for (std::size_t k = 0; k <= k_max; ++k) {
    auto mu = invariant_weights(gf, j + k);
    double s = 0;
    for (std::size_t i = 0; i < psi.size(); ++i) s += mu[i] * psi[i] * psi[i];
    rep.terms.push_back(std::sqrt(s));
    rep.partial_sums.push_back(acc += rep.terms.back());
    if (k < k_max) psi = koopman_dual_apply(w, gf, j + k, psi);
  }
  std::vector<double> xs, vs;
  for (std::size_t k = 1; k <= k_max; ++k) {
    if (rep.terms[k] <= difference_floor) break;
    xs.push_back(double(k));
    vs.push_back(rep.terms[k]);
  }
  if (xs.size() >= 3) {
    rep.fit = geometric_fit(xs, vs);
    rep.fitted = true;
  }
  return rep;
}

}  // namespace rtd
