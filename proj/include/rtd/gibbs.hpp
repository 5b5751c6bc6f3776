#pragma once

// Conformal measures, normalizers, invariant densities and their
// convergence diagnostics along an orbit window.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "rtd/common.hpp"
#include "rtd/fit.hpp"
#include "rtd/maps.hpp"
#include "rtd/orbit.hpp"
#include "rtd/transfer.hpp"

namespace rtd {

// ---------------------------------------------------------------------------
// Bounded-Lipschitz gauge over a fixed dictionary of 1-Lipschitz test
// functions bounded by 1:
//   bumps  max(0, 1 - |z - c|) on the even lattice of [0,30]x[-30,30],
//   ramps  clamp(Re z - a, -1, 1), clamp(Im z - a, -1, 1), clamp(|z| - a, -1, 1)
//          for integer a in [-30, 30].

struct BLTest {
  enum Kind { Bump, RampRe, RampIm, RampAbs } kind;
  cplx center;
  double level;

  double operator()(cplx z) const {
    switch (kind) {
      case Bump: return std::max(0.0, 1.0 - std::abs(z - center));
      case RampRe: return std::clamp(z.real() - level, -1.0, 1.0);
      case RampIm: return std::clamp(z.imag() - level, -1.0, 1.0);
      case RampAbs: return std::clamp(std::abs(z) - level, -1.0, 1.0);
    }
    return 0.0;
  }
};

inline const std::vector<BLTest>& bl_dictionary() {
  static const std::vector<BLTest> dict = [] {
    std::vector<BLTest> d;
    for (int re = 0; re <= 30; re += 2)
      for (int im = -30; im <= 30; im += 2) d.push_back({BLTest::Bump, cplx(re, im), 0});
    for (int a = -30; a <= 30; ++a) {
      d.push_back({BLTest::RampRe, {}, double(a)});
      d.push_back({BLTest::RampIm, {}, double(a)});
      if (a >= 0) d.push_back({BLTest::RampAbs, {}, double(a)});
    }
    return d;
  }();
  return dict;
}

inline double bl_distance(std::span<const cplx> p, std::span<const double> wp, std::span<const cplx> q,
                          std::span<const double> wq) {
  require(p.size() == wp.size() && q.size() == wq.size(), errc::precondition, "points and weights differ in size");
  double best = 0;
  for (const BLTest& t : bl_dictionary()) {
    double a = 0, b = 0;
    for (std::size_t i = 0; i < p.size(); ++i) a += t(p[i]) * wp[i];
    for (std::size_t i = 0; i < q.size(); ++i) b += t(q[i]) * wq[i];
    best = std::max(best, std::abs(a - b));
  }
  return best;
}

inline double bl_distance(const GridMeasure& a, const GridMeasure& b) {
  return bl_distance(a.grid->points, a.weights, b.grid->points, b.weights);
}

// ---------------------------------------------------------------------------
// Conformal measures

enum class Reference { UniformInDisk, UniformAll, HeaviestAtom };

struct ReferenceSpec {
  Reference kind = Reference::UniformInDisk;
  double radius = 10.0;
};

inline GridMeasure reference_measure(const GridPtr& grid, const ReferenceSpec& ref) {
  switch (ref.kind) {
    case Reference::UniformInDisk: return GridMeasure::uniform(grid, ref.radius);
    case Reference::UniformAll: return GridMeasure::uniform(grid);
    case Reference::HeaviestAtom: {
      // point mass at the grid point nearest to the disk center's right edge
      GridMeasure m{grid, std::vector<double>(grid->size(), 0.0)};
      m.weights[grid->nearest(cplx(ref.radius, 0))] = 1.0;
      return m;
    }
  }
  throw error(errc::precondition, "unknown reference");
}

struct ConformalResult {
  GridMeasure nu;
  std::vector<double> lambda;  // λ for fibers j, j+1, ..., j+n-1
};

// ν_j ≈ Φ_j ∘ ... ∘ Φ_{j+n-1}(reference on grid j+n).
inline ConformalResult conformal_measure(const OrbitWindow& w, std::size_t j, std::size_t n,
                                         const ReferenceSpec& ref = {}) {
  require(j + n <= w.count(), errc::precondition, "pullback depth leaves the window");
  ConformalResult r;
  r.nu = reference_measure(w.grids[j + n], ref);
  r.lambda.assign(n, 0.0);
  for (std::size_t k = j + n; k-- > j;) {
    DualResult d = dual_apply(w.ops[k], r.nu);
    r.nu = std::move(d.measure);
    r.lambda[k - j] = d.lambda;
  }
  return r;
}

struct GibbsFamily {
  std::vector<GridMeasure> nu;   // grids 0..count
  std::vector<double> lambda;    // operators 0..count-1
  std::vector<GridDensity> rho;  // grids 0..count
};

// One backward sweep for ν and one forward sweep for ρ = lim ℒ̂ⁿ1. Entries
// near the right end have shallow ν, entries near the left end shallow ρ.
inline GibbsFamily build_gibbs(const OrbitWindow& w, const ReferenceSpec& ref = {}) {
  GibbsFamily g;
  const std::size_t n = w.count();
  g.nu.resize(n + 1);
  g.lambda.resize(n);
  g.nu[n] = reference_measure(w.grids[n], ref);
  for (std::size_t k = n; k-- > 0;) {
    DualResult d = dual_apply(w.ops[k], g.nu[k + 1]);
    g.nu[k] = std::move(d.measure);
    g.lambda[k] = d.lambda;
  }
  g.rho.resize(n + 1);
  g.rho[0] = GridDensity::constant(w.grids[0], 1.0);
  for (std::size_t k = 0; k < n; ++k) g.rho[k + 1] = normalized_apply(w.ops[k], g.rho[k], g.lambda[k]);
  return g;
}

struct DepthGauge {
  std::vector<std::size_t> depth;
  std::vector<double> distance;  // BL(ν^(n), ν^(n+step))
  bool decreasing = false;
};

inline DepthGauge depth_gauge(const OrbitWindow& w, std::size_t j, std::span<const std::size_t> depths,
                              std::size_t step = 5, const ReferenceSpec& ref = {}) {
  DepthGauge g;
  for (std::size_t n : depths) {
    auto a = conformal_measure(w, j, n, ref);
    auto b = conformal_measure(w, j, n + step, ref);
    g.depth.push_back(n);
    g.distance.push_back(bl_distance(a.nu, b.nu));
  }
  g.decreasing = true;
  for (std::size_t i = 1; i < g.distance.size(); ++i)
    if (g.distance[i] > g.distance[i - 1] && g.distance[i] > 1e-14) g.decreasing = false;
  return g;
}

// ---------------------------------------------------------------------------
// Tightness ν(D̄_R0) ≥ 1/2 and ν(D̄_R^c) ≤ R^{-ε}

struct TightnessReport {
  double R0 = 0;
  double min_inner_mass = 1;  // min over the family of ν(D̄_R0)
  double eps_feasible = std::numeric_limits<double>::infinity();  // largest ε with tails ≤ R^{-ε}
  double eps_fit = 0;  // -slope of log max-tail vs log R
  bool inner_ok = false;
  bool pass = false;
};

inline TightnessReport tightness_check(std::span<const GridMeasure> family, double R0, std::span<const double> radii) {
  require(!family.empty(), errc::precondition, "empty measure family");
  TightnessReport rep;
  rep.R0 = R0;
  std::vector<double> xs, ys;
  for (const GridMeasure& m : family) {
    double inner = 0;
    for (std::size_t i = 0; i < m.weights.size(); ++i)
      if (std::abs(m.grid->points[i]) <= R0) inner += m.weights[i];
    rep.min_inner_mass = std::min(rep.min_inner_mass, inner / m.mass());
  }
  for (double R : radii) {
    if (R < R0 || R <= 1) continue;
    double worst = 0;
    for (const GridMeasure& m : family) {
      double tail = 0;
      for (std::size_t i = 0; i < m.weights.size(); ++i)
        if (std::abs(m.grid->points[i]) > R) tail += m.weights[i];
      worst = std::max(worst, tail / m.mass());
    }
    if (worst > 0) {
      rep.eps_feasible = std::min(rep.eps_feasible, -std::log(worst) / std::log(R));
      xs.push_back(std::log(R));
      ys.push_back(std::log(worst));
    }
  }
  if (xs.size() >= 2) rep.eps_fit = -linear_fit(xs, ys).slope;
  else rep.eps_fit = std::numeric_limits<double>::infinity();
  rep.inner_ok = rep.min_inner_mass >= 0.5;
  rep.pass = rep.inner_ok && rep.eps_feasible > 0;
  return rep;
}

// ---------------------------------------------------------------------------
// Invariant density

struct DensityConvergence {
  GridDensity rho;               // ℒ̂ⁿ1 on the target grid
  std::vector<double> diff;      // d_k = ‖ρ^(k+1) - ρ^(k)‖_β, k = 0..n-1
  GeometricFit fit;              // over [k_lo, k_hi] and above the floor
  bool geometric = false;        // R² ≥ 0.9
};

inline constexpr double difference_floor = 1e-13;

// ρ^(k) = ℒ̂^k_{target-k} 1, all evaluated on the target grid.
inline DensityConvergence invariant_density(const OrbitWindow& w, std::span<const double> lambda, std::size_t target,
                                            std::size_t n, double beta, double delta, std::size_t k_lo = 5,
                                            std::size_t k_hi = 30) {
  require(target >= n, errc::precondition, "not enough fibers before the target");
  for (double l : lambda) require(l > 0, errc::precondition, "λ must be positive");
  DensityConvergence res;
  std::vector<double> prev(w.grids[target]->size(), 1.0);
  std::vector<double> ks, vs;
  bool floored = false;  // entries after the first one at the floor are rounding noise
  for (std::size_t k = 1; k <= n; ++k) {
    std::vector<double> cur = iterate(w, target - k, k, std::vector<double>(w.grids[target - k]->size(), 1.0), lambda);
    std::vector<double> d(cur.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = cur[i] - prev[i];
    double dk = holder_norm(*w.grids[target], d, beta, delta).norm;
    res.diff.push_back(dk);
    floored = floored || dk <= difference_floor;
    if (!floored && k - 1 >= k_lo && k - 1 <= k_hi) {
      ks.push_back(double(k - 1));
      vs.push_back(dk);
    }
    prev = std::move(cur);
  }
  res.rho = {w.grids[target], prev};
  if (ks.size() >= 3) {
    res.fit = geometric_fit(ks, vs, difference_floor);
    res.geometric = res.fit.r2 >= 0.9;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Conformality, bounds

// max_g |⟨ℒg, ν_{θx}⟩ − λ⟨g, ν_x⟩| / ‖g‖∞
inline double conformality_residual(const TransferOperator& op, const GridMeasure& nu_x, const GridMeasure& nu_next,
                                    double lambda, std::span<const std::vector<double>> gs) {
  require(nu_x.grid == op.source() && nu_next.grid == op.target(), errc::unregistered_grid,
          "measures are not on the operator's grids");
  double worst = 0;
  for (const auto& g : gs) {
    double sup = 0;
    for (double v : g) sup = std::max(sup, std::abs(v));
    if (sup == 0) continue;
    double lhs = nu_next.integrate(op.apply(g));
    double rhs = lambda * nu_x.integrate(g);
    worst = std::max(worst, std::abs(lhs - rhs) / sup);
  }
  return worst;
}

struct LowerBoundReport {
  std::vector<double> radii;
  std::vector<double> measured_min;  // min over fibers and Julia points |w| ≤ R of ℒ1(w)
  std::vector<double> expression;    // R^{-(α₂-τ)t} 8 log R r_R^{-τ̂t}
  std::vector<double> c_emp;         // per fiber, at the smallest radius
  double c_spread = 0;               // max/min of c_emp
  double measured_slope = 0, expression_slope = 0;
  double A_emp = 0;                  // 1 / min ν(D(z, δ))
  double A_spread = 0;
  bool pass = false;
};

// fibers: list of (operator index) in the window; radii ≥ e.
inline LowerBoundReport lower_bound_diagnostics(const OrbitWindow& w, const GibbsFamily& g,
                                                std::span<const std::size_t> fibers, std::span<const double> radii,
                                                const GrowthProfile& growth, double delta) {
  LowerBoundReport rep;
  const PotentialConfig& c = w.potential;
  std::vector<double> xs, ym, ye;
  for (double R : radii) {
    require(R > std::exp(1.0), errc::precondition, "radii must exceed e");
    double mn = std::numeric_limits<double>::infinity();
    for (std::size_t j : fibers) {
      const auto& op = w.ops[j];
      for (std::size_t r = 0; r < op.rows(); ++r)
        if (std::abs(op.target()->points[r]) <= R) mn = std::min(mn, op.one()[r]);
    }
    const FiberMap& f = w.maps[fibers.front()];
    double rR = growth.omega_inverse(8 * std::log(R));
    double e = std::pow(R, -(f.alpha2 - c.tau) * c.t) * 8 * std::log(R) * std::pow(rR, -c.tau_hat(f) * c.t);
    rep.radii.push_back(R);
    rep.measured_min.push_back(mn);
    rep.expression.push_back(e);
    if (std::isfinite(mn)) {
      xs.push_back(std::log(R));
      ym.push_back(std::log(mn));
      ye.push_back(std::log(e));
    }
  }
  // per-fiber constant at the smallest radius
  const double R = radii.front();
  const double e0 = rep.expression.front();
  double amin = std::numeric_limits<double>::infinity(), amax = 0;
  std::vector<double> A_values;
  for (std::size_t j : fibers) {
    const auto& op = w.ops[j];
    double mn = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < op.rows(); ++r)
      if (std::abs(op.target()->points[r]) <= R) mn = std::min(mn, op.one()[r]);
    rep.c_emp.push_back(mn / e0);
    // A(δ): smallest ν-mass of a δ-disk around a grid point of D̄_R
    const GridMeasure& nu = g.nu[j + 1];
    std::vector<std::size_t> near;
    double m_min = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nu.grid->size(); ++i) {
      if (std::abs(nu.grid->points[i]) > R) continue;
      nu.grid->index.within(nu.grid->points[i], delta, near);
      double m = 0;
      for (std::size_t q : near) m += nu.weights[q];
      m_min = std::min(m_min, m);
    }
    double A = 1.0 / m_min;
    A_values.push_back(A);
    amin = std::min(amin, A);
    amax = std::max(amax, A);
    rep.A_emp = std::max(rep.A_emp, A);
  }
  auto [cmin, cmax] = std::minmax_element(rep.c_emp.begin(), rep.c_emp.end());
  rep.c_spread = *cmax / *cmin;
  rep.A_spread = amax / amin;
  auto within_half_of_mean = [](std::span<const double> v) {
    double mean = 0;
    for (double x : v) mean += x / double(v.size());
    for (double x : v)
      if (!(std::abs(x - mean) <= 0.5 * mean)) return false;
    return true;
  };
  if (xs.size() >= 2) {
    rep.measured_slope = linear_fit(xs, ym).slope;
    rep.expression_slope = linear_fit(xs, ye).slope;
  }
  const bool stable = *cmin > 0 && std::isfinite(rep.A_emp) && within_half_of_mean(rep.c_emp) &&
                      within_half_of_mean(A_values);
  const bool shape = rep.measured_slope >= rep.expression_slope - 0.3 * std::abs(rep.expression_slope);
  rep.pass = stable && shape;
  return rep;
}

struct UniformBoundReport {
  std::vector<std::size_t> n;
  std::vector<double> max_value;  // max over fibers and grid points of ℒ̂ⁿ1
  LinearFit trend;
  double M_emp = 0;
  bool pass = false;
};

// targets: grids on which ℒ̂ⁿ_{target-n}1 is evaluated.
inline UniformBoundReport uniform_bound_check(const OrbitWindow& w, std::span<const double> lambda,
                                              std::span<const std::size_t> targets, std::size_t n_lo,
                                              std::size_t n_hi) {
  UniformBoundReport rep;
  std::vector<double> xs;
  for (std::size_t n = n_lo; n <= n_hi; ++n) {
    double mx = 0;
    for (std::size_t t : targets) {
      require(t >= n, errc::precondition, "target too close to the window start");
      auto v = iterate(w, t - n, n, std::vector<double>(w.grids[t - n]->size(), 1.0), lambda);
      for (double x : v) mx = std::max(mx, x);
    }
    rep.n.push_back(n);
    rep.max_value.push_back(mx);
    xs.push_back(double(n));
    rep.M_emp = std::max(rep.M_emp, mx);
  }
  rep.trend = linear_fit(xs, rep.max_value);
  rep.pass = rep.trend.slope_lo <= 0;
  return rep;
}

}  // namespace rtd
