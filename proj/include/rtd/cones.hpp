#pragma once

// Cones of log-Hölder-controlled densities, the constants that define them,
// and the contraction diagnostics built on top.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "rtd/common.hpp"
#include "rtd/fit.hpp"
#include "rtd/gibbs.hpp"
#include "rtd/observables.hpp"
#include "rtd/orbit.hpp"
#include "rtd/transfer.hpp"

namespace rtd {

struct EmpiricalInputs {
  double M = 1;       // sup_n ‖ℒ̂ⁿ1‖∞
  double K = 1;       // distortion constant
  double A_ball = 1;  // 1 / min ν(D(z, δ))
  double c = 1;       // expansion prefactor
  double gamma = 2;   // expansion rate
  double a = 1;       // mixing lower bound on D_{2R}
};

struct ConeConstants {
  double beta = 0.5;
  double delta = 0;
  double M = 0, K = 0, A_ball = 0;
  double calA = 0;  // 2 max{1, A_ball, M}
  double H = 0;     // 2MK calA + 4
  double c = 0, gamma = 0;
  int N0 = 0;
  double R0 = 0, R1 = 0;
  double a = 0;
  double eta = 0;
};

// Largest δ ≤ delta_cap with 1/2 + (2MK+4)δ^β ≤ 1.
inline double variation_scale(double M, double K, double beta, double delta_cap) {
  return std::min(delta_cap, std::pow(0.5 / (2 * M * K + 4), 1.0 / beta));
}

inline ConeConstants compute_constants(const EmpiricalInputs& in, double beta, double delta_cap, double R0) {
  const double vals[] = {in.M, in.K, in.A_ball, in.c, in.gamma, in.a, beta};
  for (double v : vals) require(v > 0 && std::isfinite(v), errc::precondition, "constants must be positive and finite");
  require(in.gamma > 1, errc::precondition, "γ ≤ 1 leaves N₀ undefined");
  ConeConstants k;
  k.beta = beta;
  k.M = in.M;
  k.K = in.K;
  k.A_ball = in.A_ball;
  k.c = in.c;
  k.gamma = in.gamma;
  k.a = in.a;
  k.R0 = R0;
  k.delta = variation_scale(in.M, in.K, beta, delta_cap);
  k.calA = 2 * std::max({1.0, in.A_ball, in.M});
  k.H = 2 * in.M * in.K * k.calA + 4;
  // MK (cγⁿ)^{-β} H ≤ 1  ⇔  n ≥ (log(MKH)/β − log c) / log γ
  const double need = (std::log(in.M * in.K * k.H) / beta - std::log(in.c)) / std::log(in.gamma);
  int n = std::max(1, int(std::ceil(need - 1e-12)));
  while (n > 1 && in.M * in.K * std::pow(in.c * std::pow(in.gamma, n - 1), -beta) * k.H <= 1) --n;
  while (in.M * in.K * std::pow(in.c * std::pow(in.gamma, n), -beta) * k.H > 1) ++n;
  k.N0 = n;
  k.eta = std::min({1.0 / 3.0, 1.0 / k.H, in.a / (2 * in.M)});
  return k;
}

// Smallest grid radius R₁ with 2 calA M ℒ̂1 ≤ 1 outside D_{R₁} on every given fiber.
inline double outer_radius(std::span<const GridDensity> normalized_one, const ConeConstants& k) {
  double R1 = 0;
  for (const GridDensity& g : normalized_one)
    for (std::size_t i = 0; i < g.size(); ++i)
      if (2 * k.calA * k.M * g.values[i] > 1) R1 = std::max(R1, std::abs(g.grid->points[i]));
  return R1;
}

struct ConeMembership {
  bool in_C = false;
  bool in_C0 = false;
  bool zero = false;
  bool nonnegative = true;
  double integral = 0;
  double slack_holder = 0;  // H∫g − v_β(g)
  double slack_sup = 0;     // calA∫g − ‖g‖∞
  double slack_pointwise = 0;  // min of 2M calA ∫g ℒ̂1 − g
  bool sparse = false;
};

// prev_one: ℒ̂_{θ⁻¹x}1 on g's grid, or empty to skip the C₀ test.
inline ConeMembership cone_membership(std::span<const double> g, const GridMeasure& nu, const ConeConstants& k,
                                      std::span<const double> prev_one = {}) {
  require(g.size() == nu.weights.size(), errc::unregistered_grid, "density and measure on different grids");
  ConeMembership m;
  m.zero = std::all_of(g.begin(), g.end(), [](double v) { return v == 0; });
  m.nonnegative = std::all_of(g.begin(), g.end(), [](double v) { return v >= 0; });
  m.integral = nu.integrate(g);
  HolderNorm h = holder_norm(*nu.grid, g, k.beta, k.delta);
  m.sparse = h.sparse;
  m.slack_holder = k.H * m.integral - h.v_beta;
  m.slack_sup = k.calA * m.integral - h.sup;
  m.in_C = m.nonnegative && m.slack_holder >= 0 && m.slack_sup >= 0;
  if (!prev_one.empty()) {
    require(prev_one.size() == g.size(), errc::unregistered_grid, "ℒ̂1 on the wrong grid");
    m.slack_pointwise = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.size(); ++i)
      m.slack_pointwise = std::min(m.slack_pointwise, 2 * k.M * k.calA * m.integral * prev_one[i] - g[i]);
    m.in_C0 = m.in_C && m.slack_pointwise >= 0;
  }
  return m;
}

// ℒ̂_{j-1}1 on grid j.
inline std::vector<double> normalized_one(const OrbitWindow& w, std::span<const double> lambda, std::size_t j) {
  require(j >= 1 && j <= w.count(), errc::precondition, "grid has no predecessor in the window");
  auto row_totals = w.ops[j - 1].one();
  std::vector<double> v(row_totals.begin(), row_totals.end());
  for (double& x : v) x /= lambda[j - 1];
  return v;
}

// Softplus of a Gaussian-amplitude random field, normalized to ∫g dν = 1 and
// mixed with 1 until it sits in C_x with 10% slack.
inline std::vector<double> sample_cone_member(const GridMeasure& nu, const ConeConstants& k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RandomField f;
  for (int m = 0; m < 8; ++m) {
    f.freq.emplace_back(0.5 * u(rng), 0.5 * u(rng));
    f.amp.push_back(n01(rng));
    f.phase.push_back(pi * u(rng));
  }
  std::vector<double> g = sample_on(*nu.grid, [&](cplx z) { return softplus(f(z)); });
  const double mass = nu.integrate(g);
  require(mass > 0, errc::degenerate_density, "sampled member has zero mass");
  for (double& v : g) v /= mass;
  HolderNorm h = holder_norm(*nu.grid, g, k.beta, k.delta);
  double s = 1;
  if (h.sup > k.calA / 1.1) s = std::min(s, (k.calA / 1.1 - 1) / (h.sup - 1));
  if (h.v_beta > k.H / 1.1) s = std::min(s, (k.H / 1.1) / h.v_beta);
  for (double& v : g) v = (1 - s) + s * v;
  return g;
}

struct ConeInvarianceReport {
  std::vector<std::size_t> n;
  std::vector<double> pass_fraction;
  std::vector<std::vector<double>> images;  // ℒ̂^{N₀} of the members, normalized: elements of Λ_{θ^{N₀}x,0}
  std::size_t samples = 0;
  bool pass = false;
};

// Members on grid j; images checked in C₀ of grid j+n for each n.
inline ConeInvarianceReport cone_invariance_test(const OrbitWindow& w, const GibbsFamily& gf, const ConeConstants& k,
                                                 std::size_t j, std::span<const std::size_t> ns, std::size_t samples,
                                                 std::uint64_t seed) {
  ConeInvarianceReport rep;
  rep.samples = samples + 1;
  std::vector<std::vector<double>> members;
  members.emplace_back(w.grids[j]->size(), 1.0);
  for (std::size_t s = 0; s < samples; ++s) members.push_back(sample_cone_member(gf.nu[j], k, seed + s));
  for (std::size_t n : ns) {
    require(n >= 1 && j + n <= w.count(), errc::precondition, "iteration leaves the window");
    auto prev = normalized_one(w, gf.lambda, j + n);
    std::size_t ok = 0;
    for (const auto& g : members) {
      auto img = iterate(w, j, n, g, gf.lambda);
      auto m = cone_membership(img, gf.nu[j + n], k, prev);
      if (m.in_C0) ++ok;
      if (n == std::size_t(k.N0)) {
        for (double& v : img) v /= m.integral;
        rep.images.push_back(std::move(img));
      }
    }
    rep.n.push_back(n);
    rep.pass_fraction.push_back(double(ok) / double(members.size()));
  }
  rep.pass = std::all_of(rep.pass_fraction.begin(), rep.pass_fraction.end(), [](double f) { return f == 1.0; });
  return rep;
}

// φ₁ ≡ 1 on D₁, 0 outside D₂, radial-linear between.
inline double truncation_bump(double r) { return std::clamp(2.0 - r, 0.0, 1.0); }

// φ_R ℒ̂_{j-1}1 on grid j.
inline GridDensity truncation_function(const OrbitWindow& w, std::span<const double> lambda, std::size_t j, double R) {
  auto one = normalized_one(w, lambda, j);
  for (std::size_t i = 0; i < one.size(); ++i) one[i] *= truncation_bump(std::abs(w.grids[j]->points[i]) / R);
  return {w.grids[j], std::move(one)};
}

// Lower bound a on D_{2R} of ℒ̂ᴺg over a set of normalized members on grid j.
inline double mixing_floor(const OrbitWindow& w, std::span<const double> lambda, std::size_t j, std::size_t N,
                           double R, std::span<const std::vector<double>> members) {
  double a = std::numeric_limits<double>::infinity();
  const FiberGrid& target = *w.grids[j + N];
  for (const auto& g : members) {
    auto img = iterate(w, j, N, g, lambda);
    for (std::size_t i = 0; i < img.size(); ++i)
      if (std::abs(target.points[i]) < 2 * R) a = std::min(a, img[i]);
  }
  return a;
}

struct BowenStepReport {
  double a_emp = 0;
  double eta_xR = 0;
  bool lower_ok = false;
  bool cone_ok = false;
  bool pass = false;
};

// g on grid j with ∫g dν_j = 1, in Λ_{j,0}.
inline BowenStepReport bowen_step_check(const OrbitWindow& w, const GibbsFamily& gf, const ConeConstants& k,
                                        std::size_t j, std::span<const double> g, std::size_t N, double R) {
  require(j + N <= w.count(), errc::precondition, "iteration leaves the window");
  BowenStepReport rep;
  auto h = iterate(w, j, N, std::vector<double>(g.begin(), g.end()), gf.lambda);
  const FiberGrid& target = *w.grids[j + N];
  rep.a_emp = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < h.size(); ++i)
    if (std::abs(target.points[i]) < 2 * R) rep.a_emp = std::min(rep.a_emp, h[i]);
  rep.lower_ok = rep.a_emp > 0 && rep.a_emp >= k.a;
  GridDensity phi = truncation_function(w, gf.lambda, j + N, R);
  rep.eta_xR = k.eta * gf.nu[j + N].integrate(phi);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = (h[i] - k.eta * phi.values[i]) / (1 - rep.eta_xR);
  auto m = cone_membership(h, gf.nu[j + N], k, normalized_one(w, gf.lambda, j + N));
  rep.cone_ok = m.in_C0;
  rep.pass = rep.lower_ok && rep.cone_ok;
  return rep;
}

struct ContractionReport {
  std::vector<std::size_t> n;
  std::vector<double> D;  // max over pairs of ‖ℒ̂ⁿg − ℒ̂ⁿh‖_β
  GeometricFit fit;
  bool fitted = false;
  bool contracting = false;  // ϑ < 1 and R² ≥ 0.9
};

inline ContractionReport contraction_from_sequence(std::span<const std::size_t> ns, std::vector<double> D) {
  ContractionReport rep;
  rep.n.assign(ns.begin(), ns.end());
  rep.D = std::move(D);
  std::vector<double> xs, vs;
  for (std::size_t i = 0; i < rep.n.size(); ++i) {
    if (rep.D[i] <= difference_floor) break;
    xs.push_back(double(rep.n[i]));
    vs.push_back(rep.D[i]);
  }
  if (xs.size() >= 3) {
    rep.fit = geometric_fit(xs, vs);
    rep.fitted = true;
    rep.contracting = rep.fit.rate < 1 && rep.fit.r2 >= 0.9;
  }
  return rep;
}

// Pairs on grid j; D_n measured on grid j+n.
inline ContractionReport contraction_rate(const OrbitWindow& w, std::span<const double> lambda, std::size_t j,
                                          std::span<const std::pair<std::vector<double>, std::vector<double>>> pairs,
                                          std::span<const std::size_t> ns, double beta, double delta) {
  std::vector<double> D;
  for (std::size_t n : ns) {
    double worst = 0;
    for (const auto& [g, h] : pairs) {
      std::vector<double> d(g.size());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] - h[i];
      auto img = iterate(w, j, n, std::move(d), lambda);
      worst = std::max(worst, holder_norm(*w.grids[j + n], img, beta, delta).norm);
    }
    D.push_back(worst);
  }
  return contraction_from_sequence(ns, std::move(D));
}

// Negative control: z ↦ z on a fixed grid has the single branch of weight 1,
// so ℒ̂ = identity with λ = 1 and D_n never shrinks.
inline ContractionReport isometry_control(std::span<const cplx> points, std::span<const std::size_t> ns, double beta,
                                          double delta, std::uint64_t seed) {
  JuliaParams jp;
  jp.R_max = 1e6;
  jp.h_dedup = 1e-9;
  auto grid = std::make_shared<const FiberGrid>(seed_cloud(points, 0, jp));
  PotentialConfig pc;
  TransferOperator op(FiberMap::linear(1.0), grid, grid, pc);
  std::vector<double> d = sample_on(*grid, RandomField::make(seed));
  std::vector<double> D;
  std::size_t done = 0;
  for (std::size_t n : ns) {
    for (; done < n; ++done) d = op.apply(d);
    D.push_back(holder_norm(*grid, d, beta, delta).norm);
  }
  return contraction_from_sequence(ns, std::move(D));
}

}  // namespace rtd
