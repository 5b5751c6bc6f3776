#pragma once

// A window of consecutive fibers θ^first(x) .. θ^{first+count}(x) with their
// maps, grids and transfer operators.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "rtd/common.hpp"
#include "rtd/driving.hpp"
#include "rtd/julia.hpp"
#include "rtd/maps.hpp"
#include "rtd/transfer.hpp"

namespace rtd {

struct FamilyConfig {
  Family family = Family::RandomExp;
  double kappa = 2.0;
  double fixed_param = 1.0;  // fixtures ignore the driving parameter and use this
};

inline FiberMap fiber_map(const FamilyConfig& fc, double param) {
  switch (fc.family) {
    case Family::RandomExp: return FiberMap::exp(param, fc.kappa);
    case Family::RandomTangent: return FiberMap::tangent(param, fc.kappa);
    case Family::SquareFixture: return FiberMap::square();
    case Family::LinearFixture: return FiberMap::linear(fc.fixed_param);
  }
  throw error(errc::config, "unknown family");
}

struct WindowSpec {
  std::int64_t first = 0;   // offset of grid 0 from the base point
  std::size_t count = 10;   // number of operators; grids count + 1
  std::size_t depth = 30;   // extra pullback levels beyond the last grid
};

struct OrbitWindow {
  DrivingSystem driving;
  BasePoint base;
  std::int64_t first = 0;
  std::vector<FiberMap> maps;  // maps[j] acts on grid j; extends depth beyond the window
  std::vector<GridPtr> grids;
  std::vector<TransferOperator> ops;
  PotentialConfig potential;
  JuliaParams julia;

  std::size_t count() const { return ops.size(); }
  BasePoint fiber(std::size_t j) const { return advance(driving, base, first + std::int64_t(j)); }
};

inline std::vector<FiberMap> orbit_maps(const DrivingSystem& sys, const BasePoint& x, const FamilyConfig& fc,
                                        std::int64_t first, std::size_t n) {
  std::vector<FiberMap> out;
  out.reserve(n);
  for (std::size_t j = 0; j < n; ++j)
    out.push_back(fiber_map(fc, parameter_at(sys, advance(sys, x, first + std::int64_t(j)))));
  return out;
}

inline OrbitWindow build_window(const DrivingSystem& sys, const BasePoint& x, const FamilyConfig& fc,
                                const WindowSpec& spec, const JuliaParams& jp, const PotentialConfig& pc) {
  require(spec.count >= 1, errc::precondition, "window needs at least one operator");
  OrbitWindow w;
  w.driving = sys;
  w.base = x;
  w.first = spec.first;
  w.potential = pc;
  w.julia = jp;
  w.maps = orbit_maps(sys, x, fc, spec.first, spec.count + spec.depth);
  for (const FiberMap& f : w.maps) validate(pc, f);
  cplx seed[] = {repelling_fixed_point(w.maps.back())};
  auto clouds = pullback_sweep(w.maps, seed, jp, spec.first);
  w.grids.reserve(spec.count + 1);
  for (std::size_t j = 0; j <= spec.count; ++j)
    w.grids.push_back(std::make_shared<const FiberGrid>(std::move(clouds[j])));
  w.ops.reserve(spec.count);
  for (std::size_t j = 0; j < spec.count; ++j) w.ops.emplace_back(w.maps[j], w.grids[j], w.grids[j + 1], pc);
  return w;
}

// ℒ^n g from grid `from` to grid `from + n`, optionally normalized by λ.
inline std::vector<double> iterate(const OrbitWindow& w, std::size_t from, std::size_t n, std::vector<double> g,
                                   std::span<const double> lambda = {}) {
  require(from + n <= w.count(), errc::precondition, "iteration leaves the window");
  for (std::size_t j = from; j < from + n; ++j) {
    g = w.ops[j].apply(g);
    if (!lambda.empty())
      for (double& v : g) v /= lambda[j];
  }
  return g;
}

// ℒ^n g(w) by explicit composition of inverse branches, without grids.
// maps[0..n) act on fibers 0..n-1; w lives on fiber n. Every level keeps the
// branches |k| ≤ min(inner_cap, K_max).
template <class Fn>
double composed_transfer(std::span<const FiberMap> maps, Fn&& g, cplx w, const PotentialConfig& c, int inner_cap) {
  if (maps.empty()) return g(w);
  const FiberMap& f = maps.back();
  PotentialConfig level = c;
  level.K_max = std::min(c.K_max, inner_cap);
  double s = 0;
  for (const WeightedBranch& b : weighted_branches(f, w, level))
    s += b.weight * composed_transfer(maps.first(maps.size() - 1), g, b.z, c, inner_cap);
  return s;
}

// The leaves of that recursion: every composed branch point over w with its
// product weight, so several g can share one expansion.
inline void composed_branches(std::span<const FiberMap> maps, cplx w, const PotentialConfig& c, int inner_cap,
                              std::vector<WeightedBranch>& out, double weight = 1.0) {
  if (maps.empty()) {
    out.push_back({0, w, weight});
    return;
  }
  PotentialConfig level = c;
  level.K_max = std::min(c.K_max, inner_cap);
  for (const WeightedBranch& b : weighted_branches(maps.back(), w, level))
    composed_branches(maps.first(maps.size() - 1), b.z, c, inner_cap, out, weight * b.weight);
}

}  // namespace rtd
