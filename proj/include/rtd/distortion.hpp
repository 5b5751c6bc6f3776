#pragma once

// Distortion of ℒⁿ1 along a fiber and the two-norm (Lasota–Yorke type)
// inequality for iterated transfer operators.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "rtd/common.hpp"
#include "rtd/fit.hpp"
#include "rtd/orbit.hpp"
#include "rtd/transfer.hpp"

namespace rtd {

struct DistortionReport {
  std::vector<std::size_t> n;
  std::vector<double> K;  // max over pairs of (ratio - 1)/|w₁ - w₂|
  std::size_t pairs = 0;
  double K_fit = 0;       // mean over n
  bool pass = false;      // every K(n) within ±20% of K_fit
};

inline double distortion_constant(const FiberGrid& grid, std::span<const double> v, double d_lo, double d_hi,
                                  std::size_t* pair_count = nullptr) {
  double K = 0;
  std::size_t pairs = 0;
  std::vector<std::size_t> near;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.index.within(grid.points[i], d_hi, near);
    for (std::size_t j : near) {
      if (j <= i) continue;
      const double d = std::abs(grid.points[i] - grid.points[j]);
      if (d <= d_lo) continue;
      require(v[i] > 0 && v[j] > 0, errc::degenerate_density, "ℒⁿ1 vanishes on the grid");
      ++pairs;
      K = std::max(K, (std::max(v[i] / v[j], v[j] / v[i]) - 1) / d);
    }
  }
  if (pair_count) *pair_count = pairs;
  return K;
}

inline DistortionReport distortion_from_images(const FiberGrid& grid, std::span<const std::size_t> ns,
                                               std::span<const std::vector<double>> images, double d_lo, double d_hi) {
  DistortionReport rep;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    rep.n.push_back(ns[i]);
    rep.K.push_back(distortion_constant(grid, images[i], d_lo, d_hi, &rep.pairs));
  }
  for (double k : rep.K) rep.K_fit += k / double(rep.K.size());
  rep.pass = !rep.K.empty() && std::all_of(rep.K.begin(), rep.K.end(), [&](double k) {
    return std::abs(k - rep.K_fit) <= 0.2 * rep.K_fit;
  });
  return rep;
}

// ℒⁿ1 on a fixed target grid, for the operators ending there. Pairs closer
// than d_lo are skipped: nearest-neighbour reads make grid neighbours below
// the cover scale share branch values and inflate the ratios.
inline DistortionReport distortion_check(const OrbitWindow& w, std::size_t target, std::span<const std::size_t> ns,
                                         double d_lo, double d_hi) {
  std::vector<std::vector<double>> images;
  for (std::size_t n : ns) {
    require(n >= 1 && n <= target, errc::precondition, "not enough fibers before the target");
    images.push_back(iterate(w, target - n, n, std::vector<double>(w.grids[target - n]->size(), 1.0)));
  }
  return distortion_from_images(*w.grids[target], ns, images, d_lo, d_hi);
}

struct TestObservable {
  std::function<double(cplx)> fn;
  double sup = 0;
  double v_beta = 0;
};

struct TwoNormRow {
  std::size_t n = 0;
  std::size_t g = 0;
  double lhs = 0;  // v_β(ℒⁿg) on the sampled pairs
  double rhs = 0;  // ‖ℒⁿ‖∞ (‖g‖∞ + K (cγⁿ)^{-β} v_β(g))
  double margin = 0;
};

struct TwoNormReport {
  std::vector<TwoNormRow> rows;
  std::vector<double> variation_share;  // B_n per n: the variation part of v_β(ℒⁿg)/‖ℒⁿ‖∞ per unit v_β(g)
  double decay = 0;                     // -slope of log B_n over n ≥ fit_from
  double predicted = 0;                 // β log γ
  double min_margin = std::numeric_limits<double>::infinity();
  bool pass = false;
};

struct TwoNormConfig {
  double K = 1, c = 1, gamma = 2, beta = 0.5;
  double pair_distance = 1e-6;
  int inner_cap = 6;
  std::size_t fit_from = 2;
};

// maps: the orbit up to the target fiber (maps.size() ≥ max n). Every ℒⁿ is
// evaluated off-grid from composed branches at the sample points and at
// partners pair_distance away.
inline TwoNormReport two_norm_check(std::span<const FiberMap> maps, std::span<const cplx> samples,
                                    std::span<const TestObservable> gs, std::span<const std::size_t> ns,
                                    const PotentialConfig& pc, const TwoNormConfig& tc) {
  TwoNormReport rep;
  rep.predicted = tc.beta * std::log(tc.gamma);
  const double d = tc.pair_distance;
  const double db = std::pow(d, tc.beta);
  std::vector<double> xs, ys;
  std::vector<WeightedBranch> leaves_a, leaves_b;
  for (std::size_t n : ns) {
    require(n >= 1 && n <= maps.size(), errc::precondition, "not enough maps for n");
    auto ms = maps.last(n);
    double sup1 = 0, v1 = 0;
    std::vector<double> vg(gs.size(), 0.0);
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const cplx a = samples[s];
      const cplx b = a + std::polar(d, 0.3 * double(s));
      leaves_a.clear();
      leaves_b.clear();
      composed_branches(ms, a, pc, tc.inner_cap, leaves_a);
      composed_branches(ms, b, pc, tc.inner_cap, leaves_b);
      double one_a = 0, one_b = 0;
      for (const auto& l : leaves_a) one_a += l.weight;
      for (const auto& l : leaves_b) one_b += l.weight;
      sup1 = std::max({sup1, one_a, one_b});
      v1 = std::max(v1, std::abs(one_a - one_b) / db);
      for (std::size_t q = 0; q < gs.size(); ++q) {
        double ga = 0, gb = 0;
        for (const auto& l : leaves_a) ga += l.weight * gs[q].fn(l.z);
        for (const auto& l : leaves_b) gb += l.weight * gs[q].fn(l.z);
        vg[q] = std::max(vg[q], std::abs(ga - gb) / db);
      }
    }
    const double coeff = tc.K * std::pow(tc.c * std::pow(tc.gamma, double(n)), -tc.beta);
    double share = 0;
    for (std::size_t q = 0; q < gs.size(); ++q) {
      TwoNormRow r{n, q, vg[q], sup1 * (gs[q].sup + coeff * gs[q].v_beta), 0};
      r.margin = r.rhs - r.lhs;
      rep.min_margin = std::min(rep.min_margin, r.margin);
      rep.rows.push_back(r);
      if (gs[q].v_beta > 0) share = std::max(share, (vg[q] / sup1 - gs[q].sup * v1 / sup1) / gs[q].v_beta);
    }
    rep.variation_share.push_back(share);
    if (n >= tc.fit_from && share > 0) {
      xs.push_back(double(n));
      ys.push_back(std::log(share));
    }
  }
  if (xs.size() >= 2) rep.decay = -linear_fit(xs, ys).slope;
  rep.pass = rep.min_margin >= 0 && std::abs(rep.decay - rep.predicted) <= 0.2 * rep.predicted;
  return rep;
}

}  // namespace rtd
