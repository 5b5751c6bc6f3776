#pragma once

// Invertible ergodic base systems (X, θ, m) and the fiber-parameter lookup.
//
// Base points are addressed as (origin, seed, time) so that θ and θ⁻¹ are exact
// index arithmetic: a rotation point is frac(origin + time·α), a two-sided
// Bernoulli point reads its symbol at position `time` of a counter-based
// stream keyed by `seed`.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "rtd/common.hpp"

namespace rtd {

enum class DrivingKind { CircleRotation, BernoulliShift };

struct BasePoint {
  double origin = 0.0;      // rotation start in [0,1)
  std::uint64_t seed = 0;   // shift sequence key
  std::int64_t time = 0;

  friend bool operator==(const BasePoint&, const BasePoint&) = default;
};

struct DrivingSystem {
  DrivingKind kind = DrivingKind::CircleRotation;
  double angle = (std::sqrt(5.0) - 1.0) / 2.0;
  int symbols = 2;
  std::uint64_t shift_seed = 0;
  // parameter box; rotation interpolates affinely, the shift reads `symbol_values`
  double param_min = 0.1;
  double param_max = 0.3;
  std::vector<double> symbol_values;
  std::int64_t max_orbit = std::int64_t{1} << 40;

  static DrivingSystem rotation(double angle, double lo, double hi) {
    DrivingSystem s;
    s.kind = DrivingKind::CircleRotation;
    s.angle = angle;
    s.param_min = lo;
    s.param_max = hi;
    return s;
  }

  static DrivingSystem shift(std::vector<double> values, std::uint64_t seed) {
    require(values.size() >= 2, errc::precondition, "shift needs at least two symbols");
    DrivingSystem s;
    s.kind = DrivingKind::BernoulliShift;
    s.symbols = int(values.size());
    s.shift_seed = seed;
    s.param_min = *std::min_element(values.begin(), values.end());
    s.param_max = *std::max_element(values.begin(), values.end());
    s.symbol_values = std::move(values);
    return s;
  }
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// frac(a + b·n) without forming b·n at full magnitude.
inline double frac_affine(double a, double b, std::int64_t n) {
  long double prod = static_cast<long double>(b) * static_cast<long double>(n);
  long double v = static_cast<long double>(a) + (prod - std::floor(prod));
  v -= std::floor(v);
  return static_cast<double>(v);
}
}  // namespace detail

inline BasePoint advance(const DrivingSystem& sys, BasePoint x, std::int64_t n) {
  require(std::abs(n) <= sys.max_orbit, errc::orbit_overflow, "step exceeds max orbit length");
  require(std::abs(x.time) <= sys.max_orbit - std::abs(n), errc::orbit_overflow,
          "time index would leave the configured orbit range");
  x.time += n;
  return x;
}

// Position of a rotation point in [0,1).
inline double position(const DrivingSystem& sys, const BasePoint& x) {
  return detail::frac_affine(x.origin, sys.angle, x.time);
}

inline int symbol_at(const DrivingSystem& sys, const BasePoint& x, std::int64_t offset = 0) {
  std::uint64_t h = detail::splitmix64(x.seed ^ detail::splitmix64(sys.shift_seed));
  h = detail::splitmix64(h + static_cast<std::uint64_t>(x.time + offset));
  return int(h % static_cast<std::uint64_t>(sys.symbols));
}

inline double parameter_at(const DrivingSystem& sys, const BasePoint& x) {
  if (sys.kind == DrivingKind::CircleRotation) {
    return sys.param_min + (sys.param_max - sys.param_min) * position(sys, x);
  }
  return sys.symbol_values[std::size_t(symbol_at(sys, x))];
}

// Reproducible Monte-Carlo sample of base points whose orbits of length
// `orbit_len` in either direction stay inside the configured range.
inline std::vector<BasePoint> sample_fibers(const DrivingSystem& sys, std::size_t n_fibers,
                                            std::int64_t orbit_len, std::uint64_t seed) {
  require(orbit_len >= 0 && orbit_len <= sys.max_orbit, errc::orbit_overflow,
          "orbit length exceeds max orbit");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<BasePoint> out;
  out.reserve(n_fibers);
  for (std::size_t i = 0; i < n_fibers; ++i) {
    BasePoint p;
    if (sys.kind == DrivingKind::CircleRotation) {
      p.origin = unif(rng);
    } else {
      p.seed = rng();
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace rtd
