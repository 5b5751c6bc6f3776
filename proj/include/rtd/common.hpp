#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace rtd {

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;

enum class errc {
  precondition,
  orbit_overflow,
  pole_proximity,
  omitted_value,
  empty_range,
  singular_value_in_disk,
  branch_mismatch,
  insufficient_samples,
  no_candidate,
  quadrature,
  divergence,
  empty_cloud,
  fit_failure,
  zero_normalizer,
  unregistered_grid,
  tail_budget,
  degenerate_density,
  config,
};

inline const char* to_string(errc c) {
  switch (c) {
    case errc::precondition: return "precondition";
    case errc::orbit_overflow: return "orbit-overflow";
    case errc::pole_proximity: return "pole-proximity";
    case errc::omitted_value: return "omitted-value";
    case errc::empty_range: return "empty-range";
    case errc::singular_value_in_disk: return "singular-value-in-disk";
    case errc::branch_mismatch: return "branch-mismatch";
    case errc::insufficient_samples: return "insufficient-samples";
    case errc::no_candidate: return "no-candidate";
    case errc::quadrature: return "quadrature-nonconvergence";
    case errc::divergence: return "divergence-guard";
    case errc::empty_cloud: return "empty-cloud";
    case errc::fit_failure: return "fit-failure";
    case errc::zero_normalizer: return "zero-normalizer";
    case errc::unregistered_grid: return "unregistered-grid";
    case errc::tail_budget: return "tail-budget";
    case errc::degenerate_density: return "degenerate-density";
    case errc::config: return "config";
  }
  return "unknown";
}

// All library failures are reported through this exception; code() says which.
class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

inline void require(bool ok, errc code, const std::string& what) {
  if (!ok) throw error(code, what);
}

}  // namespace rtd
