#pragma once

// Least-squares helpers shared by the diagnostics. Every empirical constant in
// this library comes out of one of these fits, so they report enough to judge
// the fit (R², slope standard error, 95% band) and not just the point estimate.

#include <cmath>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "rtd/common.hpp"

namespace rtd {

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
  double slope_se = 0;
  double slope_lo = 0;  // 95% confidence band
  double slope_hi = 0;
  std::size_t n = 0;
};

inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), errc::fit_failure, "x/y size mismatch");
  const std::size_t n = x.size();
  require(n >= 2, errc::fit_failure, "need at least two points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0, errc::fit_failure, "degenerate abscissae");
  LinearFit f;
  f.n = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = y[i] - (f.intercept + f.slope * x[i]);
    sse += r * r;
  }
  f.r2 = syy > 0 ? 1.0 - sse / syy : 1.0;
  if (n > 2) {
    f.slope_se = std::sqrt(sse / double(n - 2) / sxx);
    boost::math::students_t dist(double(n - 2));
    double q = boost::math::quantile(boost::math::complement(dist, 0.025));
    f.slope_lo = f.slope - q * f.slope_se;
    f.slope_hi = f.slope + q * f.slope_se;
  } else {
    f.slope_lo = f.slope_hi = f.slope;
  }
  return f;
}

// Fit v_k ≈ B·ϑ^k on the strictly positive entries; returns ϑ = exp(slope).
struct GeometricFit {
  double rate = 0;
  double prefactor = 0;
  double r2 = 0;
  std::size_t used = 0;
};

inline GeometricFit geometric_fit(std::span<const double> k, std::span<const double> v,
                                  double floor = 0.0) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (v[i] > floor && std::isfinite(v[i])) {
      xs.push_back(k[i]);
      ys.push_back(std::log(v[i]));
    }
  }
  require(xs.size() >= 3, errc::fit_failure, "geometric fit needs three positive values");
  LinearFit lf = linear_fit(xs, ys);
  return {std::exp(lf.slope), std::exp(lf.intercept), lf.r2, xs.size()};
}

}  // namespace rtd
