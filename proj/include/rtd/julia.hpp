#pragma once

// Julia-set approximation by shrinking inverse branches, expansion and mixing
// diagnostics, and the hyperbolicity margin.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "rtd/common.hpp"
#include "rtd/fit.hpp"
#include "rtd/maps.hpp"
#include "rtd/spatial.hpp"

namespace rtd {

inline constexpr std::uint32_t no_parent = std::numeric_limits<std::uint32_t>::max();

struct JuliaParams {
  double R_max = 30.0;
  double h_dedup = 0.0;      // 0 means R_max / 2000
  double eta_shrink = 1.2;   // required average expansion per step along kept branches
  double h_cover = 0.0;      // 0 means 4 h_dedup

  double dedup() const { return h_dedup > 0 ? h_dedup : R_max / 2000.0; }
  double cover() const { return h_cover > 0 ? h_cover : 4.0 * dedup(); }
};

// Cloud for one fiber. Point i maps under the fiber map onto point parent[i]
// of the next cloud (via branch[i]); merged_parents lists every next-cloud
// point whose preimage fell into the same dedup cell.
struct JuliaCloud {
  std::int64_t fiber = 0;
  double R_max = 0;
  double h_dedup = 0;
  std::vector<cplx> points;
  std::vector<int> depth;
  std::vector<double> log_deriv;  // log|(f^depth)'(z)|
  std::vector<std::uint32_t> parent;
  std::vector<int> branch;
  std::vector<std::uint32_t> merged_offsets{0};
  std::vector<std::uint32_t> merged_parents;
  PointIndex index;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  std::size_t nearest(cplx z) const { return index.nearest(z); }
  std::span<const std::uint32_t> parents_of(std::size_t i) const {
    return {merged_parents.data() + merged_offsets[i], merged_offsets[i + 1] - merged_offsets[i]};
  }
};

// All branches of f over w with |z| <= R, ascending in k.
inline std::vector<Branch> branches_within(const FiberMap& f, cplx w, double R) {
  if (auto range = finite_branch_range(f)) {
    std::vector<Branch> out;
    for (const Branch& b : preimages(f, w, range->first, range->second))
      if (std::abs(b.z) <= R) out.push_back(b);
    std::sort(out.begin(), out.end(), [](const Branch& a, const Branch& b) { return a.k < b.k; });
    return out;
  }
  BranchLattice lat = branch_lattice(f, w);
  const double P = std::abs(lat.period);
  const double sigma = (lat.base * std::conj(lat.period)).real() / (P * P);
  const double d2 = std::max(0.0, std::norm(lat.base) - P * P * sigma * sigma);
  std::vector<Branch> out;
  if (R * R < d2) return out;
  const double X = std::sqrt(R * R - d2) / P;
  const long lo = long(std::floor(-sigma - X)) - 1;
  const long hi = long(std::ceil(-sigma + X)) + 1;
  for (long k = lo; k <= hi; ++k) {
    cplx z = lat.base + double(k) * lat.period;
    if (std::abs(z) <= R) out.push_back({int(k), z});
  }
  return out;
}

namespace detail {

inline void finalize_cloud(JuliaCloud& c, std::vector<std::vector<std::uint32_t>>& merged) {
  c.merged_offsets.assign(1, 0);
  c.merged_parents.clear();
  for (auto& m : merged) {
    std::sort(m.begin(), m.end());
    m.erase(std::unique(m.begin(), m.end()), m.end());
    c.merged_parents.insert(c.merged_parents.end(), m.begin(), m.end());
    c.merged_offsets.push_back(std::uint32_t(c.merged_parents.size()));
  }
  c.index = PointIndex(c.points);
}

}  // namespace detail

inline JuliaCloud seed_cloud(std::span<const cplx> seeds, std::int64_t fiber, const JuliaParams& p) {
  JuliaCloud c;
  c.fiber = fiber;
  c.R_max = p.R_max;
  c.h_dedup = p.dedup();
  CellDeduper dd(p.dedup());
  std::vector<std::vector<std::uint32_t>> merged;
  for (cplx s : seeds) {
    if (std::abs(s) > p.R_max) continue;
    if (!dd.offer(s).second) continue;
    c.points.push_back(s);
    c.depth.push_back(0);
    c.log_deriv.push_back(0.0);
    c.parent.push_back(no_parent);
    c.branch.push_back(0);
    merged.emplace_back();
  }
  require(!c.empty(), errc::empty_cloud, "no seed point inside the truncation disk");
  detail::finalize_cloud(c, merged);
  return c;
}

// One pullback level: preimages under f of the next fiber's cloud.
inline JuliaCloud pullback(const FiberMap& f, const JuliaCloud& next, const JuliaParams& p) {
  JuliaCloud c;
  c.fiber = next.fiber - 1;
  c.R_max = p.R_max;
  c.h_dedup = p.dedup();
  CellDeduper dd(p.dedup());
  std::vector<std::vector<std::uint32_t>> merged;
  const double log_eta = std::log(p.eta_shrink);
  for (std::size_t w = 0; w < next.size(); ++w) {
    const cplx target = next.points[w];
    std::vector<Branch> bs;
    try {
      bs = branches_within(f, target, p.R_max);
    } catch (const error& e) {
      if (e.code() == errc::omitted_value) continue;
      throw;
    }
    for (const Branch& b : bs) {
      double d = std::abs(deriv(f, b.z));
      if (!(d > 0)) continue;
      const int depth = next.depth[w] + 1;
      const double ld = next.log_deriv[w] + std::log(d);
      if (ld < depth * log_eta) continue;
      auto [slot, inserted] = dd.offer(b.z);
      if (inserted) {
        c.points.push_back(b.z);
        c.depth.push_back(depth);
        c.log_deriv.push_back(ld);
        c.parent.push_back(std::uint32_t(w));
        c.branch.push_back(b.k);
        merged.emplace_back();
      }
      merged[slot].push_back(std::uint32_t(w));
    }
  }
  require(!c.empty(), errc::empty_cloud, "pullback produced no shrinking branch inside the truncation disk");
  detail::finalize_cloud(c, merged);
  return c;
}

// Clouds for fibers 0..n of the window; maps[j] acts on fiber j, seeds sit on
// fiber n. Entry j has depth n - j.
inline std::vector<JuliaCloud> pullback_sweep(std::span<const FiberMap> maps, std::span<const cplx> seeds,
                                              const JuliaParams& p, std::int64_t first_fiber = 0) {
  const std::size_t n = maps.size();
  std::vector<JuliaCloud> out(n + 1);
  out[n] = seed_cloud(seeds, first_fiber + std::int64_t(n), p);
  for (std::size_t j = n; j-- > 0;) out[j] = pullback(maps[j], out[j + 1], p);
  return out;
}

inline JuliaCloud approximate_julia(std::span<const FiberMap> maps, std::size_t depth, std::span<const cplx> seeds,
                                    const JuliaParams& p) {
  require(maps.size() >= depth, errc::precondition, "orbit shorter than the requested depth");
  auto clouds = pullback_sweep(maps.first(depth), seeds, p);
  return std::move(clouds.front());
}

// Repelling fixed point used as a default seed.
inline cplx repelling_fixed_point(const FiberMap& f) {
  switch (f.family) {
    case Family::SquareFixture: return 1.0;
    case Family::LinearFixture: return 0.0;
    default: break;
  }
  // Newton on f(z) - z from the right of the attracting basin (exp) or
  // near the origin's neighbouring fixed point (tan).
  cplx z = f.family == Family::RandomExp ? cplx{4.0, 0.0} : cplx{4.0, 0.1};
  for (int it = 0; it < 200; ++it) {
    cplx g = value(f, z) - z;
    cplx dz = g / (deriv(f, z) - 1.0);
    z -= dz;
    if (std::abs(dz) < 1e-14 * (1 + std::abs(z))) break;
  }
  return z;
}

// Max over points of the stepwise forward residual |f(z) - parent| along the
// whole chain back to the seeds.
inline double forward_chain_residual(std::span<const FiberMap> maps, std::span<const JuliaCloud> clouds) {
  double worst = 0;
  for (std::size_t j = 0; j + 1 < clouds.size(); ++j) {
    for (std::size_t i = 0; i < clouds[j].size(); ++i) {
      cplx img = value(maps[j], clouds[j].points[i]);
      cplx par = clouds[j + 1].points[clouds[j].parent[i]];
      worst = std::max(worst, std::abs(img - par) / (1 + std::abs(par)));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Expansion

// Cloud sequences are passed as any indexable range of clouds or pointers to clouds.
inline const JuliaCloud& as_cloud(const JuliaCloud& c) { return c; }
template <class P>
const JuliaCloud& as_cloud(const std::shared_ptr<P>& p) {
  return *p;
}

struct ExpansionReport {
  double c = 0;
  double gamma = 0;
  double gamma_lo = 0;
  double gamma_hi = 0;
  double r2 = 0;
  bool pass = false;
};

// min over points of fiber 0 of log|(f^n)'(z)|, n = 1..n_max.
template <class Clouds>
std::vector<double> min_log_expansion(const Clouds& clouds, std::size_t n_max) {
  require(clouds.size() > n_max, errc::precondition, "need clouds for n = 0..n_max");
  const JuliaCloud& c0 = as_cloud(clouds[0]);
  std::vector<double> out(n_max, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < c0.size(); ++i) {
    if (std::size_t(c0.depth[i]) < n_max) continue;
    std::uint32_t at = std::uint32_t(i);
    for (std::size_t n = 1; n <= n_max; ++n) {
      at = as_cloud(clouds[n - 1]).parent[at];
      out[n - 1] = std::min(out[n - 1], c0.log_deriv[i] - as_cloud(clouds[n]).log_deriv[at]);
    }
  }
  for (double v : out) require(std::isfinite(v), errc::fit_failure, "no point of sufficient depth");
  return out;
}

inline ExpansionReport expansion_constants(std::span<const double> n, std::span<const double> min_log_deriv) {
  require(n.size() == min_log_deriv.size() && n.size() >= 2, errc::fit_failure, "need at least two depths");
  LinearFit fit = linear_fit(n, min_log_deriv);
  require(std::isfinite(fit.slope), errc::fit_failure, "degenerate expansion data");
  ExpansionReport r;
  r.gamma = std::exp(fit.slope);
  r.c = std::exp(fit.intercept);
  r.gamma_lo = std::exp(fit.slope_lo);
  r.gamma_hi = std::exp(fit.slope_hi);
  r.r2 = fit.r2;
  r.pass = r.gamma_lo > 1.0;
  return r;
}

template <class Clouds>
ExpansionReport expansion_constants(const Clouds& clouds, std::size_t n_max) {
  std::vector<double> v = min_log_expansion(clouds, n_max);
  std::vector<double> n(n_max);
  for (std::size_t k = 0; k < n_max; ++k) n[k] = double(k + 1);
  return expansion_constants(n, v);
}

// ---------------------------------------------------------------------------
// Mixing time N(r, R)

struct MixingResult {
  int N = 0;
  bool found = false;
  std::size_t centers = 0;
};

// Forward images of D(z, r) ∩ cloud_0 follow the merged-parent relation.
// Membership in D̄_R is tested with tolerance h_cover.
template <class Clouds>
MixingResult mixing_time(const Clouds& clouds, double r, double R, double h_cover, std::size_t max_centers = 200) {
  require(clouds.size() >= 2, errc::precondition, "need at least one step of clouds");
  require(r > 0 && R > 0, errc::precondition, "radii must be positive");
  const JuliaCloud& c0 = as_cloud(clouds[0]);
  std::vector<std::size_t> centers;
  for (std::size_t i = 0; i < c0.size(); ++i)
    if (std::abs(c0.points[i]) <= R + h_cover) centers.push_back(i);
  if (centers.size() > max_centers) {
    std::vector<std::size_t> thinned;
    const double stride = double(centers.size()) / double(max_centers);
    for (std::size_t k = 0; k < max_centers; ++k) thinned.push_back(centers[std::size_t(k * stride)]);
    centers = std::move(thinned);
  }
  MixingResult res;
  res.centers = centers.size();
  require(!centers.empty(), errc::empty_cloud, "no cloud point inside D_R");

  std::vector<std::vector<std::uint32_t>> sets(centers.size());
  std::vector<std::size_t> buf;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    c0.index.within(c0.points[centers[c]], r, buf);
    sets[c].assign(buf.begin(), buf.end());
  }
  for (std::size_t n = 1; n < clouds.size(); ++n) {
    const JuliaCloud& prev = as_cloud(clouds[n - 1]);
    const JuliaCloud& cur = as_cloud(clouds[n]);
    std::vector<std::size_t> targets;
    for (std::size_t i = 0; i < cur.size(); ++i)
      if (std::abs(cur.points[i]) <= R + h_cover) targets.push_back(i);
    bool all = true;
    std::vector<char> mark(cur.size());
    for (auto& s : sets) {
      std::fill(mark.begin(), mark.end(), 0);
      std::vector<std::uint32_t> next;
      for (std::uint32_t i : s)
        for (std::uint32_t p : prev.parents_of(i))
          if (!mark[p]) {
            mark[p] = 1;
            next.push_back(p);
          }
      std::sort(next.begin(), next.end());
      s = std::move(next);
      if (!all) continue;
      std::vector<char> covered(cur.size());
      for (std::uint32_t i : s) {
        cur.index.within(cur.points[i], h_cover, buf);
        for (std::size_t q : buf) covered[q] = 1;
      }
      for (std::size_t t : targets)
        if (!covered[t]) {
          all = false;
          break;
        }
    }
    if (all) {
      res.N = int(n);
      res.found = true;
      return res;
    }
  }
  res.N = int(clouds.size()) - 1;
  return res;
}

// ---------------------------------------------------------------------------
// Hyperbolicity margin and derivative bounds

// Postsingular points on fiber 0: singular values of the maps past_maps[m]
// (acting on fiber m - past_maps.size()) pushed forward to fiber 0.
inline std::vector<cplx> postsingular_points(std::span<const FiberMap> past_maps) {
  std::vector<cplx> out;
  const std::size_t m = past_maps.size();
  for (std::size_t start = 0; start < m; ++start) {
    for (cplx s : singular_values(past_maps[start])) {
      cplx p = s;
      bool finite = true;
      for (std::size_t j = start + 1; j < m && finite; ++j) {
        ExtendedComplex v = eval(past_maps[j], p);
        finite = !v.infinite && std::abs(v.value) < 1e12;
        p = v.value;
      }
      if (finite) out.push_back(p);
    }
  }
  return out;
}

// Half the distance from the cloud to the postsingular points.
inline double delta0_estimate(const JuliaCloud& cloud, std::span<const cplx> postsingular) {
  require(!cloud.empty(), errc::empty_cloud, "empty cloud");
  if (postsingular.empty()) return std::numeric_limits<double>::infinity();
  double d = std::numeric_limits<double>::infinity();
  for (cplx p : postsingular) d = std::min(d, std::abs(p - cloud.points[cloud.nearest(p)]));
  return d / 2;
}

struct DerivativeBoundRow {
  int N = 0;
  double bound = 0;  // max |(f^N)'| over cloud points z ∈ D_R with f^N(z) ∈ D_R
  std::size_t samples = 0;
};

struct DerivativeBoundReport {
  std::vector<DerivativeBoundRow> rows;
  bool growth_suspicious = false;
};

template <class Clouds>
DerivativeBoundReport derivative_bound_report(const Clouds& clouds, double R, std::span<const int> Ns) {
  DerivativeBoundReport rep;
  const JuliaCloud& c0 = as_cloud(clouds[0]);
  for (int N : Ns) {
    require(N >= 1 && std::size_t(N) < clouds.size(), errc::precondition, "N outside the available window");
    DerivativeBoundRow row;
    row.N = N;
    for (std::size_t i = 0; i < c0.size(); ++i) {
      if (std::abs(c0.points[i]) > R || c0.depth[i] < N) continue;
      std::uint32_t at = std::uint32_t(i);
      for (int n = 0; n < N; ++n) at = as_cloud(clouds[std::size_t(n)]).parent[at];
      if (std::abs(as_cloud(clouds[std::size_t(N)]).points[at]) > R) continue;
      row.bound = std::max(row.bound, std::exp(c0.log_deriv[i] - as_cloud(clouds[std::size_t(N)]).log_deriv[at]));
      ++row.samples;
    }
    rep.rows.push_back(row);
  }
  for (std::size_t k = 1; k < rep.rows.size(); ++k)
    if (rep.rows[k].samples > 0 && rep.rows[k - 1].samples > 0 && rep.rows[k].bound > 10 * rep.rows[k - 1].bound)
      rep.growth_suspicious = true;
  return rep;
}

}  // namespace rtd
