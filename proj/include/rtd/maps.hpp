#pragma once

// Closed-form fiber maps: value, derivative, spherical derivative,
// branch-indexed preimages and continuity-tracked inverse branches, together
// with the empirical checks for the growth conditions.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rtd/common.hpp"
#include "rtd/spatial.hpp"

namespace rtd {

enum class Family {
  RandomExp,      // z ↦ η e^z
  RandomTangent,  // z ↦ λ tan z
  SquareFixture,  // z ↦ z²   (plumbing fixture, not transcendental)
  LinearFixture,  // z ↦ a z  (a = 1 is the single-branch isometry)
};

inline const char* to_string(Family f) {
  switch (f) {
    case Family::RandomExp: return "random-exp";
    case Family::RandomTangent: return "random-tangent";
    case Family::SquareFixture: return "square-fixture";
    case Family::LinearFixture: return "linear-fixture";
  }
  return "unknown";
}

struct FiberMap {
  Family family = Family::RandomExp;
  cplx param{0.2, 0.0};
  // declared balanced-growth metadata
  double alpha1 = 0.0;
  double alpha2 = 1.0;
  double kappa = 2.0;
  double order = 1.0;  // declared order bound ρ

  static FiberMap exp(cplx eta, double kappa = 2.0) { return {Family::RandomExp, eta, 0.0, 1.0, kappa, 1.0}; }
  static FiberMap tangent(cplx lambda, double kappa = 10.0) {
    return {Family::RandomTangent, lambda, 0.0, 2.0, kappa, 1.0};
  }
  static FiberMap square() { return {Family::SquareFixture, 1.0, 1.0, 1.0, 4.0, 0.0}; }
  static FiberMap linear(cplx a) { return {Family::LinearFixture, a, 0.0, 0.0, std::max(std::abs(a), 1.0 / std::abs(a)), 0.0}; }

  bool transcendental() const { return family == Family::RandomExp || family == Family::RandomTangent; }
  double alpha() const { return alpha1 + alpha2; }
  bool growth_exponents_valid() const { return alpha() > 0 && alpha2 > std::max(0.0, -alpha1); }
};

struct ExtendedComplex {
  cplx value{0, 0};
  bool infinite = false;

  static ExtendedComplex infinity() { return {cplx{0, 0}, true}; }
  ExtendedComplex() = default;
  ExtendedComplex(cplx v) : value(v) {}  // NOLINT(google-explicit-constructor)
  ExtendedComplex(cplx v, bool inf) : value(v), infinite(inf) {}
};

inline constexpr double pole_tolerance = 1e-14;
inline constexpr double residual_tolerance = 1e-10;

namespace detail {
inline void check_pole(const FiberMap& f, cplx z) {
  if (f.family != Family::RandomTangent) return;
  double k = std::round((z.real() - pi / 2) / pi);
  cplx pole{pi / 2 + k * pi, 0.0};
  require(std::abs(z - pole) >= pole_tolerance, errc::pole_proximity,
          "z within 1e-14 of a pole of tan");
}
}  // namespace detail

inline ExtendedComplex eval(const FiberMap& f, cplx z) {
  switch (f.family) {
    case Family::RandomExp: return f.param * std::exp(z);
    case Family::RandomTangent:
      detail::check_pole(f, z);
      return f.param * std::tan(z);
    case Family::SquareFixture: return z * z;
    case Family::LinearFixture: return f.param * z;
  }
  return ExtendedComplex::infinity();
}

inline cplx value(const FiberMap& f, cplx z) { return eval(f, z).value; }

inline cplx deriv(const FiberMap& f, cplx z) {
  switch (f.family) {
    case Family::RandomExp: return f.param * std::exp(z);
    case Family::RandomTangent: {
      detail::check_pole(f, z);
      cplx c = std::cos(z);
      return f.param / (c * c);
    }
    case Family::SquareFixture: return 2.0 * z;
    case Family::LinearFixture: return f.param;
  }
  return 0;
}

// |f'|/(1+|f|²) in a form that stays finite through poles and overflow.
inline double spherical_deriv(const FiberMap& f, cplx z) {
  switch (f.family) {
    case Family::RandomExp: {
      double s = z.real() + std::log(std::abs(f.param));
      return 1.0 / (2.0 * std::cosh(s));
    }
    case Family::RandomTangent: {
      double l = std::abs(f.param);
      double c = std::norm(std::cos(z));
      double s = std::norm(std::sin(z));
      return l / (c + l * l * s);
    }
    case Family::SquareFixture: return 2.0 * std::abs(z) / (1.0 + std::norm(z * z));
    case Family::LinearFixture: return std::abs(f.param) / (1.0 + std::norm(f.param * z));
  }
  return 0;
}

// Asymptotic/critical values that inverse branches must avoid.
inline std::vector<cplx> singular_values(const FiberMap& f) {
  switch (f.family) {
    case Family::RandomExp: return {cplx{0, 0}};
    case Family::RandomTangent: return {cplx{0, 1} * f.param, cplx{0, -1} * f.param};
    case Family::SquareFixture: return {cplx{0, 0}};
    case Family::LinearFixture: return {};
  }
  return {};
}

struct Branch {
  int k = 0;
  cplx z;
};

// Preimages of lattice families are z_k = base + k·period.
struct BranchLattice {
  cplx base;
  cplx period;
};

inline bool has_lattice(const FiberMap& f) { return f.transcendental(); }

inline void check_not_omitted(const FiberMap& f, cplx w) {
  switch (f.family) {
    case Family::RandomExp:
      require(std::abs(w) >= pole_tolerance, errc::omitted_value, "0 is omitted by η e^z");
      break;
    case Family::RandomTangent: {
      cplx q = w / f.param;
      require(std::abs(q - cplx{0, 1}) >= pole_tolerance && std::abs(q + cplx{0, 1}) >= pole_tolerance,
              errc::omitted_value, "±iλ are omitted by λ tan z");
      break;
    }
    case Family::LinearFixture:
    case Family::SquareFixture: break;
  }
}

inline BranchLattice branch_lattice(const FiberMap& f, cplx w) {
  check_not_omitted(f, w);
  switch (f.family) {
    case Family::RandomExp: return {std::log(w / f.param), cplx{0, 2 * pi}};
    case Family::RandomTangent: return {std::atan(w / f.param), cplx{pi, 0}};
    default: throw error(errc::precondition, "family has finitely many branches");
  }
}

// Every branch index the family admits inside [k_lo, k_hi].
inline std::vector<Branch> preimages(const FiberMap& f, cplx w, int k_lo, int k_hi) {
  require(k_lo <= k_hi, errc::empty_range, "branch range is empty");
  check_not_omitted(f, w);
  std::vector<Branch> out;
  switch (f.family) {
    case Family::RandomExp:
    case Family::RandomTangent: {
      BranchLattice lat = branch_lattice(f, w);
      out.reserve(std::size_t(k_hi - k_lo + 1));
      for (int k = k_lo; k <= k_hi; ++k) out.push_back({k, lat.base + double(k) * lat.period});
      if (f.family == Family::RandomExp) {
        std::stable_sort(out.begin(), out.end(), [](const Branch& a, const Branch& b) {
          return std::abs(a.z.imag()) < std::abs(b.z.imag());
        });
      } else {
        std::stable_sort(out.begin(), out.end(),
                         [](const Branch& a, const Branch& b) { return std::abs(a.k) < std::abs(b.k); });
      }
      break;
    }
    case Family::SquareFixture: {
      cplx r = std::sqrt(w);
      if (k_lo <= 0 && 0 <= k_hi) out.push_back({0, r});
      if (k_lo <= 1 && 1 <= k_hi) out.push_back({1, -r});
      break;
    }
    case Family::LinearFixture:
      if (k_lo <= 0 && 0 <= k_hi) out.push_back({0, w / f.param});
      break;
  }
  require(!out.empty(), errc::empty_range, "no branch of this family lies in the range");
  return out;
}

// Full branch index range for finite families; lattice families are unbounded.
inline std::optional<std::pair<int, int>> finite_branch_range(const FiberMap& f) {
  switch (f.family) {
    case Family::SquareFixture: return std::pair{0, 1};
    case Family::LinearFixture: return std::pair{0, 0};
    default: return std::nullopt;
  }
}

// Holomorphic inverse branch of f on D(w, r) through the anchor (w, z0).
class InverseBranch {
 public:
  InverseBranch(FiberMap f, cplx w, cplx z0, double r) : f_(f), w_(w), z0_(z0), r_(r) {
    require(r > 0, errc::precondition, "disk radius must be positive");
    cplx fz = value(f_, z0_);
    require(std::abs(fz - w_) <= residual_tolerance * (1 + std::abs(w_)), errc::branch_mismatch,
            "anchor is not a preimage of w");
    require(std::abs(deriv(f_, z0_)) > 0, errc::precondition, "anchor is a critical point");
    for (cplx s : singular_values(f_)) {
      require(std::abs(s - w_) >= r_, errc::singular_value_in_disk, "singular value inside the disk");
    }
  }

  cplx operator()(cplx u) const {
    require(std::abs(u - w_) <= r_ * (1 + 1e-12), errc::precondition, "point outside the branch disk");
    cplx z;
    switch (f_.family) {
      case Family::RandomExp: z = z0_ + std::log(u / w_); break;
      case Family::RandomTangent: {
        cplx l = f_.param;
        z = z0_ + std::atan((u - w_) * l / (l * l + u * w_));
        break;
      }
      case Family::SquareFixture: z = z0_ * std::sqrt(u / w_); break;
      case Family::LinearFixture: z = u / f_.param; break;
    }
    require(std::abs(value(f_, z) - u) <= residual_tolerance * (1 + std::abs(u)), errc::branch_mismatch,
            "continuity tracking lost the branch");
    return z;
  }

  cplx derivative(cplx u) const { return 1.0 / deriv(f_, (*this)(u)); }

  cplx center() const { return w_; }
  cplx anchor() const { return z0_; }
  double radius() const { return r_; }

 private:
  FiberMap f_;
  cplx w_, z0_;
  double r_;
};

inline InverseBranch inverse_branch(const FiberMap& f, cplx w, cplx z0, double r) {
  return InverseBranch(f, w, z0, r);
}

struct BalancedGrowthReport {
  double kappa_fit = 0;
  double upper = 0;  // max |f'| / ((1+|z|)^α₁ (1+|f|)^α₂)
  double lower = 0;  // min of the same ratio
  std::size_t samples = 0;
  bool pass = false;
};

inline BalancedGrowthReport check_balanced_growth(const FiberMap& f, std::span<const cplx> samples) {
  require(samples.size() >= 100, errc::insufficient_samples, "balanced growth needs >= 100 samples");
  BalancedGrowthReport rep;
  rep.samples = samples.size();
  rep.upper = 0;
  rep.lower = std::numeric_limits<double>::infinity();
  for (cplx z : samples) {
    double fz = std::abs(value(f, z));
    double ratio = std::abs(deriv(f, z)) /
                   (std::pow(1 + std::abs(z), f.alpha1) * std::pow(1 + fz, f.alpha2));
    rep.upper = std::max(rep.upper, ratio);
    rep.lower = std::min(rep.lower, ratio);
  }
  rep.kappa_fit = std::max(rep.upper, 1.0 / rep.lower);
  rep.pass = rep.kappa_fit <= f.kappa;
  return rep;
}

struct GrowthProfile {
  double order = 1.0;        // ρ
  double coefficient = 1.0;  // C_ρ in T̊(r) ≤ C_ρ r^ρ
  double omega_slope = 0.25; // ω(r) = c₀ r

  double omega(double r) const { return omega_slope * r; }
  double omega_inverse(double y) const { return y / omega_slope; }
};

struct GrowthProfileCheck {
  bool omega_increasing = false;
  bool log_ratio_decreasing = false;
  double last_ratio = 0;  // log r / ω(r) at the largest radius
};

inline GrowthProfileCheck check_growth_profile(const GrowthProfile& g, std::span<const double> radii) {
  require(radii.size() >= 2, errc::insufficient_samples, "need a radius grid");
  GrowthProfileCheck c{true, true, 0};
  double prev_w = -std::numeric_limits<double>::infinity();
  double prev_ratio = std::numeric_limits<double>::infinity();
  for (double r : radii) {
    double w = g.omega(r);
    if (!(w > prev_w)) c.omega_increasing = false;
    prev_w = w;
    if (r > std::exp(1.0)) {
      double ratio = std::log(r) / w;
      if (ratio > prev_ratio) c.log_ratio_decreasing = false;
      prev_ratio = ratio;
      c.last_ratio = ratio;
    }
  }
  return c;
}

struct NormalizationData {
  double radius = 0;  // T
  cplx base_point;    // z_x
  cplx offset;        // translation T_x(z) = z + z_x
  double residual = 0;
};

// Does z lie (within tol) on cloud_x ∩ D̄_T with f(z) on cloud_next ∩ D̄_T?
inline bool qualifies_as_base_point(const FiberMap& f, cplx z, std::span<const cplx> cloud_x,
                                    std::span<const cplx> cloud_next, double T, double tol) {
  if (std::abs(z) > T + tol) return false;
  auto dist_to = [](cplx p, std::span<const cplx> s, double T) {
    double d = std::numeric_limits<double>::infinity();
    for (cplx q : s)
      if (std::abs(q) <= T) d = std::min(d, std::abs(p - q));
    return d;
  };
  cplx fz = value(f, z);
  if (std::abs(fz) > T + tol) return false;
  return dist_to(z, cloud_x, T) <= tol && dist_to(fz, cloud_next, T) <= tol;
}

// Grid search for z_x over the cloud of x: minimise the distance of f(z) to
// cloud_next ∩ D̄_T among cloud points in D̄_T.
inline NormalizationData normalize(const FiberMap& f, std::span<const cplx> cloud_x,
                                   std::span<const cplx> cloud_next, double T, double grid_spacing) {
  const double tol = 10 * grid_spacing;
  std::vector<cplx> targets;
  for (cplx q : cloud_next)
    if (std::abs(q) <= T) targets.push_back(q);
  require(!targets.empty(), errc::no_candidate, "no Julia point of the next fiber inside D_T");
  PointIndex idx(targets);
  double best = std::numeric_limits<double>::infinity();
  cplx best_z{0, 0};
  for (cplx z : cloud_x) {
    if (std::abs(z) > T) continue;
    cplx fz = value(f, z);
    if (std::abs(fz) > T + tol) continue;
    double d = std::abs(fz - targets[idx.nearest(fz)]);
    if (d < best || (d == best && std::abs(z) < std::abs(best_z))) {
      best = d;
      best_z = z;
    }
  }
  require(best <= tol, errc::no_candidate, "no base point within tolerance; T is too small for this fiber");
  return {T, best_z, best_z, best};
}

}  // namespace rtd
