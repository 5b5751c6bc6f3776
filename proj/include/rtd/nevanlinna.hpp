#pragma once

// Value distribution toolkit: chordal geometry, the Ahlfors–Shimizu
// characteristic, counting functions, first/second main theorem checks and the
// preimage tail sums that bound the transfer operator.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "rtd/common.hpp"
#include "rtd/fit.hpp"
#include "rtd/maps.hpp"

namespace rtd {

// Chordal distance on the Riemann sphere, normalised so that [0, ∞] = 1.
inline double chordal_distance(const ExtendedComplex& a, const ExtendedComplex& b) {
  if (a.infinite && b.infinite) return 0.0;
  if (a.infinite) return 1.0 / std::sqrt(1.0 + std::norm(b.value));
  if (b.infinite) return 1.0 / std::sqrt(1.0 + std::norm(a.value));
  return std::abs(a.value - b.value) / (std::sqrt(1.0 + std::norm(a.value)) * std::sqrt(1.0 + std::norm(b.value)));
}

struct QuadratureValue {
  double value = 0;
  double error = 0;
};

namespace detail {

inline constexpr unsigned gk_depth = 18;
inline constexpr double gk_tol = 1e-10;

// (s/π) ∫₀^{2π} f#(s e^{iθ})² dθ, the radial density of the spherical area.
inline QuadratureValue ring_density(const FiberMap& f, double s) {
  if (s == 0.0) return {0.0, 0.0};
  double err = 0;
  auto integrand = [&](double th) {
    double v = spherical_deriv(f, std::polar(s, th));
    return v * v;
  };
  // split at the real axis crossings so that bumps centred there are interior
  double a = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(integrand, -pi / 2, pi / 2,
                                                                            gk_depth, gk_tol, &err);
  double e1 = err;
  double b = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(integrand, pi / 2, 3 * pi / 2,
                                                                            gk_depth, gk_tol, &err);
  return {(a + b) * s / pi, (e1 + err) * s / pi};
}

// ∫_lo^hi ring(s)·weight(s) ds with nested adaptive Gauss–Kronrod.
template <class Weight>
QuadratureValue radial_integral(const FiberMap& f, double lo, double hi, Weight weight) {
  if (hi <= lo) return {0.0, 0.0};
  double inner_err = 0;
  double outer_err = 0;
  auto integrand = [&](double s) {
    QuadratureValue r = ring_density(f, s);
    inner_err = std::max(inner_err, r.error);
    return r.value * weight(s);
  };
  double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(integrand, lo, hi, gk_depth,
                                                                            gk_tol, &outer_err);
  return {v, outer_err + inner_err * (hi - lo)};
}

}  // namespace detail

// A_f(t) = (1/π) ∬_{|z|≤t} (f#)² dA.
inline QuadratureValue spherical_area(const FiberMap& f, double t, double rel_tol = 1e-4) {
  require(t > 0, errc::precondition, "spherical area needs t > 0");
  QuadratureValue a = detail::radial_integral(f, 0.0, t, [](double) { return 1.0; });
  require(a.error <= rel_tol * std::max(a.value, 1e-300) || a.error < 1e-14, errc::quadrature,
          "spherical area quadrature did not converge");
  return a;
}

struct CharacteristicTable {
  std::vector<double> radii;
  std::vector<double> area;    // A_f(r)
  std::vector<double> value;   // T̊(r)
  std::vector<double> error;   // accumulated quadrature error of T̊
};

// T̊(r) = ∫₀^r A_f(t) dt/t, accumulated interval by interval as
// T̊(r_i) = T̊(r_{i-1}) + log(r_i/r_{i-1}) A_f(r_{i-1}) + ∫_{r_{i-1}}^{r_i} ring(s) log(r_i/s) ds.
inline CharacteristicTable characteristic(const FiberMap& f, std::span<const double> radii) {
  require(!radii.empty(), errc::precondition, "empty radius grid");
  CharacteristicTable tab;
  double prev_r = 0, area = 0, T = 0, err_area = 0, err_T = 0;
  for (double r : radii) {
    require(r > prev_r, errc::precondition, "radius grid must be positive and increasing");
    QuadratureValue piece = detail::radial_integral(f, prev_r, r, [r](double s) { return std::log(r / s); });
    QuadratureValue darea = detail::radial_integral(f, prev_r, r, [](double) { return 1.0; });
    if (prev_r > 0) {
      T += std::log(r / prev_r) * area;
      err_T += std::log(r / prev_r) * err_area;
    }
    T += piece.value;
    err_T += piece.error;
    area += darea.value;
    err_area += darea.error;
    tab.radii.push_back(r);
    tab.area.push_back(area);
    tab.value.push_back(T);
    tab.error.push_back(err_T);
    prev_r = r;
  }
  return tab;
}

// ---------------------------------------------------------------------------
// Counting functions

struct CountingValue {
  long n = 0;     // n(r, w)
  double N = 0;   // N(r, w)
};

namespace detail {

// Moduli of all preimages of w with |z| ≤ r (∞ means poles), ascending.
inline std::vector<double> preimage_moduli_within(const FiberMap& f, const ExtendedComplex& w, double r) {
  std::vector<double> out;
  if (w.infinite) {
    if (f.family != Family::RandomTangent) return out;  // entire families have no poles
    // poles of tan at π/2 + kπ
    long kmax = long(std::floor(r / pi + 0.5)) + 1;
    for (long k = -kmax - 1; k <= kmax; ++k) {
      double m = std::abs(pi / 2 + double(k) * pi);
      if (m <= r) out.push_back(m);
    }
  } else if (has_lattice(f)) {
    BranchLattice lat = branch_lattice(f, w.value);
    double P = std::abs(lat.period);
    double sigma = (lat.base * std::conj(lat.period)).real() / (P * P);
    double d2 = std::max(0.0, std::norm(lat.base) - P * P * sigma * sigma);
    if (r * r >= d2) {
      double X = std::sqrt(r * r - d2) / P;
      long lo = long(std::floor(-sigma - X)) - 1;
      long hi = long(std::ceil(-sigma + X)) + 1;
      for (long k = lo; k <= hi; ++k) {
        double m = std::abs(lat.base + double(k) * lat.period);
        if (m <= r) out.push_back(m);
      }
    }
  } else {
    auto range = *finite_branch_range(f);
    for (const Branch& b : preimages(f, w.value, range.first, range.second)) {
      double m = std::abs(b.z);
      if (m <= r) out.push_back(m);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

inline constexpr double origin_tolerance = 1e-14;

// n(r,w) by branch enumeration and N(r,w) = Σ_{0<|z_k|≤r} log(r/|z_k|) + n(0,w) log r.
inline CountingValue counting(const FiberMap& f, const ExtendedComplex& w, double r) {
  require(r > 0, errc::precondition, "counting radius must be positive");
  CountingValue c;
  for (double m : detail::preimage_moduli_within(f, w, r)) {
    ++c.n;
    c.N += (m < origin_tolerance) ? std::log(r) : std::log(r / m);
  }
  return c;
}

struct MarginRow {
  double r = 0;
  double lhs = 0;
  double rhs = 0;
  double margin = 0;  // rhs - lhs for FMT, lhs - rhs for SMT; >= 0 means satisfied
};

struct MarginReport {
  std::vector<MarginRow> rows;
  double min_margin = std::numeric_limits<double>::infinity();
  double budget = 0;
  bool pass = false;
};

// N(r,w) ≤ T̊(r) + log 1/[f(0), w] on the grid.
inline MarginReport fmt_check(const FiberMap& f, cplx w, std::span<const double> radii, double budget = 1e-3) {
  double chord = chordal_distance(eval(f, 0.0), w);
  require(chord > 0, errc::precondition, "f(0) = w makes the proximity term infinite");
  CharacteristicTable tab = characteristic(f, radii);
  MarginReport rep;
  rep.budget = budget;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    MarginRow row;
    row.r = radii[i];
    row.lhs = counting(f, w, radii[i]).N;
    row.rhs = tab.value[i] + std::log(1.0 / chord);
    row.margin = row.rhs - row.lhs;
    rep.min_margin = std::min(rep.min_margin, row.margin);
    rep.budget = std::max(rep.budget, tab.error[i]);
    rep.rows.push_back(row);
  }
  rep.pass = rep.min_margin >= -rep.budget;
  return rep;
}

// ---------------------------------------------------------------------------
// Uniform second main theorem

struct SmtErrorConfig {
  double L = 1.0;
  double order = 1.0;        // ρ
  double coefficient = 1.0;  // C_ρ
  double b6 = 0.0;

  double b1() const { return std::exp(1.0) * (1.0 + std::pow(L * std::exp(std::exp(1.0)), 2)); }
  double r0() const { return L * std::exp(std::exp(1.0)); }
};

// D̊(a₁,a₂,a₃) = −log Π[a_i,a_j] + 2 log 2 over the three unordered pairs.
inline double smt_discrepancy(const std::array<ExtendedComplex, 3>& a) {
  double prod = 1;
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      double c = chordal_distance(a[std::size_t(i)], a[std::size_t(j)]);
      require(c > 0, errc::precondition, "targets must be pairwise distinct");
      prod *= c;
    }
  }
  return -std::log(prod) + 2 * std::log(2.0);
}

namespace detail {
inline double smt_constant_part(const SmtErrorConfig& c) {
  return 2 * std::log(108 + 18 * std::log(2.0)) + 0.5 * std::log(c.b1()) + 1 + std::log(c.L);
}
}  // namespace detail

// b₆ as the max over a dense grid of the full error with T̊ replaced by its
// bound C_ρ r^ρ, minus 6ρ log r.
inline double calibrate_b6(const SmtErrorConfig& c, double r_max, std::size_t grid = 4000) {
  const double r0 = c.r0();
  require(r_max > r0, errc::precondition, "calibration range must extend beyond r0");
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i <= grid; ++i) {
    double r = r0 * std::pow(r_max / r0, double(i) / double(grid));
    double lr = std::log(r);
    double v = detail::smt_constant_part(c) + 4 * (std::log(c.coefficient) + c.order * lr) +
               (1.5 * (c.order - 1) + 0.5) * lr - 6 * c.order * lr;
    best = std::max(best, v);
  }
  return best;
}

struct SmtErrorTerm {
  double full = 0;
  double simplified = 0;
  double discrepancy = 0;  // D̊
  bool full_le_simplified = false;
};

inline SmtErrorTerm smt_error_term(const SmtErrorConfig& c, double characteristic_at_r,
                                   const std::array<ExtendedComplex, 3>& a, double r) {
  require(c.L >= 1, errc::precondition, "L must be >= 1");
  require(r >= c.r0(), errc::precondition, "radius below r0 = L e^e");
  require(characteristic_at_r > 0, errc::precondition, "T̊(r) must be positive");
  SmtErrorTerm s;
  s.discrepancy = smt_discrepancy(a);
  const double lr = std::log(r);
  s.full = detail::smt_constant_part(c) + 4 * std::log(characteristic_at_r) + (1.5 * (c.order - 1) + 0.5) * lr +
           s.discrepancy;
  s.simplified = c.b6 + 6 * c.order * lr + s.discrepancy;
  s.full_le_simplified = s.full <= s.simplified + 1e-12;
  return s;
}

// Σ_j N(a_j, r) ≥ T̊(r) − S(r, a₁, a₂, a₃) on radii ≥ r0.
inline MarginReport smt_lower_bound_check(const FiberMap& f, const std::array<ExtendedComplex, 3>& a,
                                          std::span<const double> radii, const SmtErrorConfig& c) {
  double fsharp0 = spherical_deriv(f, 0.0);
  require(fsharp0 >= 1.0 / c.L && fsharp0 <= c.L, errc::precondition,
          "hypothesis (1) violated: f#(0) outside [1/L, L]");
  ExtendedComplex f0 = eval(f, 0.0);
  for (const auto& aj : a) {
    require(chordal_distance(f0, aj) > 0, errc::precondition, "hypothesis (2) violated: f(0) is a target");
  }
  smt_discrepancy(a);  // distinctness
  CharacteristicTable tab = characteristic(f, radii);
  for (std::size_t i = 0; i < radii.size(); ++i) {
    require(tab.value[i] <= c.coefficient * std::pow(radii[i], c.order), errc::precondition,
            "hypothesis (3) violated: T̊(r) exceeds C_ρ r^ρ");
  }
  MarginReport rep;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    double r = radii[i];
    if (r < c.r0()) continue;
    MarginRow row;
    row.r = r;
    for (const auto& aj : a) row.lhs += counting(f, aj, r).N;
    row.rhs = tab.value[i] - smt_error_term(c, tab.value[i], a, r).full;
    row.margin = row.lhs - row.rhs;
    rep.min_margin = std::min(rep.min_margin, row.margin);
    rep.rows.push_back(row);
  }
  require(!rep.rows.empty(), errc::precondition, "no radius at or above r0 in the grid");
  rep.pass = rep.min_margin >= 0;
  return rep;
}

// ---------------------------------------------------------------------------
// Preimage tail sums Σ_{f(z)=w, |z|>R} |z|^{-s}

struct TailSum {
  double direct = 0;      // branch summation + Euler–Maclaurin remainder
  double stieltjes = 0;   // −n(R)R^{-s} + s ∫_R^∞ n(r) r^{-s-1} dr
  double rel_diff = 0;
};

namespace detail {

// Binomial coefficient C(a, j) for real a.
inline double real_binomial(double a, int j) {
  double c = 1;
  for (int i = 0; i < j; ++i) c *= (a - i) / (i + 1);
  return c;
}

// Lattice moduli |z_k|² = P²(k+σ)² + d².
struct LatticeGeometry {
  double P = 0, sigma = 0, d2 = 0;

  static LatticeGeometry of(const BranchLattice& lat) {
    LatticeGeometry g;
    g.P = std::abs(lat.period);
    g.sigma = (lat.base * std::conj(lat.period)).real() / (g.P * g.P);
    g.d2 = std::max(0.0, std::norm(lat.base) - g.P * g.P * g.sigma * g.sigma);
    return g;
  }
  double modulus_at(double u) const { return std::sqrt(P * P * u * u + d2); }
};

// Σ_{j≥0} (P²(u0+j)² + d²)^{-s/2}, u0 > 0: `direct_terms` explicit terms,
// then Euler–Maclaurin with the integral expanded in d²/(P u)².
inline double lattice_side_sum(const LatticeGeometry& g, double u0, double s, int direct_terms) {
  const double m = s / 2;
  auto h = [&](double u) { return g.P * g.P * u * u + g.d2; };
  double sum = 0;
  for (int j = 0; j < direct_terms; ++j) sum += std::pow(h(u0 + j), -m);
  const double a = u0 + direct_terms;
  const double ha = h(a), h1 = 2 * g.P * g.P * a, h2 = 2 * g.P * g.P;
  const double g0 = std::pow(ha, -m);
  const double g1 = -m * std::pow(ha, -m - 1) * h1;
  const double g3 = -m * (m + 1) * (m + 2) * std::pow(ha, -m - 3) * h1 * h1 * h1 +
                    3 * m * (m + 1) * std::pow(ha, -m - 2) * h1 * h2;
  double integral = 0;
  const double q = g.d2 / (g.P * g.P);
  for (int j = 0; j < 40; ++j) {
    double term = real_binomial(-m, j) * std::pow(q, j) * std::pow(a, 1 - s - 2 * j) / (s + 2 * j - 1);
    integral += term;
    if (std::abs(term) < 1e-18 * std::abs(integral)) break;
  }
  integral *= std::pow(g.P, -s);
  return sum + integral + g0 / 2 - g1 / 12 + g3 / 720;
}

}  // namespace detail

inline constexpr int tail_direct_terms = 64;

// Fast single-route tail used inside operator error budgets.
inline double lattice_tail(const FiberMap& f, cplx w, double s, double R) {
  require(s > f.order, errc::divergence, "tail sum diverges for s <= order");
  if (!has_lattice(f)) {
    auto range = *finite_branch_range(f);
    double t = 0;
    for (const Branch& b : preimages(f, w, range.first, range.second))
      if (std::abs(b.z) > R) t += std::pow(std::abs(b.z), -s);
    return t;
  }
  auto g = detail::LatticeGeometry::of(branch_lattice(f, w));
  // smallest |u| with modulus > R on each side of the lattice
  double U = (R * R > g.d2) ? std::sqrt(R * R - g.d2) / g.P : 0.0;
  double kp = std::floor(U - g.sigma);
  while (g.modulus_at(kp + g.sigma) <= R || kp + g.sigma <= 0) kp += 1;
  double km = std::floor(U + g.sigma);
  while (g.modulus_at(km - g.sigma) <= R || km - g.sigma <= 0) km += 1;
  double total = detail::lattice_side_sum(g, kp + g.sigma, s, tail_direct_terms) +
                 detail::lattice_side_sum(g, km - g.sigma, s, tail_direct_terms);
  // a branch with u = 0 exactly (k = -σ) is never counted by either side
  double k0 = -g.sigma;
  if (std::abs(k0 - std::round(k0)) < 1e-12 && std::sqrt(g.d2) > R) total += std::pow(std::sqrt(g.d2), -s);
  return total;
}

// Two independent evaluations of the preimage tail; they must agree.
inline TailSum tail_sum(const FiberMap& f, cplx w, double s, double R) {
  require(s > f.order, errc::divergence, "tail sum diverges for s <= order");
  TailSum ts;
  ts.direct = lattice_tail(f, w, s, R);
  if (!has_lattice(f)) {
    ts.stieltjes = ts.direct;
    return ts;
  }
  auto g = detail::LatticeGeometry::of(branch_lattice(f, w));
  // exact piecewise-constant n(r) up to R_big, then n ≈ 2√(r²−d²)/P whose
  // oscillating remainder integrates to O(R_big^{-s-1}).
  const double R_big = std::max(64.0 * std::max(R, 1.0), std::pow(1e12, 1.0 / (s + 1)) * g.P);
  std::vector<double> moduli = detail::preimage_moduli_within(f, w, R_big);
  long nR = 0;
  std::vector<double> above;
  for (double m : moduli) {
    if (m <= R) ++nR;
    else above.push_back(m);
  }
  // s ∫_R^{R_big} n(r) r^{-s-1} dr with n piecewise constant
  double integral = 0;
  long n = nR;
  double lo = R;
  for (double m : above) {
    integral += double(n) * (std::pow(lo, -s) - std::pow(m, -s));
    ++n;
    lo = m;
  }
  integral += double(n) * (std::pow(lo, -s) - std::pow(R_big, -s));
  double smooth = 0;
  for (int j = 0; j < 40; ++j) {
    double term = detail::real_binomial(0.5, j) * std::pow(-g.d2, j) * std::pow(R_big, 1 - s - 2 * j) /
                  (s + 2 * j - 1);
    smooth += term;
    if (std::abs(term) < 1e-18 * std::abs(smooth)) break;
  }
  smooth *= 2 * s / g.P;
  ts.stieltjes = -double(nR) * std::pow(R, -s) + integral + smooth;
  if (R <= 0) ts.stieltjes = integral + smooth;  // n(0) R^{-s} term vanishes with the convention n(0)=0
  ts.rel_diff = std::abs(ts.direct - ts.stieltjes) / std::max(std::abs(ts.direct), 1e-300);
  return ts;
}

// Least-squares slope of log T̊ against log r over the top decade of the table.
inline double order_estimate(const CharacteristicTable& tab) {
  require(tab.radii.size() >= 3, errc::insufficient_samples, "table too short");
  const double r_max = tab.radii.back();
  require(r_max / tab.radii.front() >= std::pow(10.0, 1.5), errc::insufficient_samples,
          "table must span at least 1.5 decades");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < tab.radii.size(); ++i) {
    if (tab.radii[i] >= r_max / 10 && tab.value[i] > 0) {
      xs.push_back(std::log(tab.radii[i]));
      ys.push_back(std::log(tab.value[i]));
    }
  }
  require(xs.size() >= 2, errc::insufficient_samples, "too few positive entries in the top decade");
  return linear_fit(xs, ys).slope;
}

}  // namespace rtd
