#pragma once

// Test functions on the plane: random Hölder fields, cusps and radial
// observables, plus sampling onto grids.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "rtd/common.hpp"
#include "rtd/julia.hpp"

namespace rtd {

// offset + Σ amp_m sin(Re(conj(freq_m) z) + phase_m): smooth, hence β-Hölder.
struct RandomField {
  double offset = 0;
  std::vector<cplx> freq;
  std::vector<double> amp, phase;

  static RandomField make(std::uint64_t seed, int modes = 6, double max_freq = 1.0, double amplitude = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    RandomField f;
    for (int m = 0; m < modes; ++m) {
      f.freq.emplace_back(max_freq * u(rng), max_freq * u(rng));
      f.amp.push_back(amplitude * u(rng) / modes);
      f.phase.push_back(pi * u(rng));
    }
    return f;
  }

  double operator()(cplx z) const {
    double s = offset;
    for (std::size_t m = 0; m < freq.size(); ++m) s += amp[m] * std::sin((std::conj(freq[m]) * z).real() + phase[m]);
    return s;
  }
};

// min(|z - center|, cap)^β: variation exactly 1 at scales below cap.
struct Cusp {
  cplx center;
  double beta = 0.5;
  double cap = 1.0;
  double operator()(cplx z) const { return std::pow(std::min(std::abs(z - center), cap), beta); }
};

// Bounded radial observable centered later per fiber: 1/(1 + |z|/scale).
struct RadialObservable {
  double scale = 5.0;
  double operator()(cplx z) const { return 1.0 / (1.0 + std::abs(z) / scale); }
};

// tanh(Im z / scale). Odd under conjugation, so for real-parameter families
// the Birkhoff sums are symmetric in law.
struct ConjugationOdd {
  double scale = 2.0;
  double operator()(cplx z) const { return std::tanh(z.imag() / scale); }
};

// Σ_j 2^{-jβ}(cos(2^j Re z + a_j) + cos(2^j Im z + b_j)), j < levels: β-Hölder
// with variation at every scale down to 2^{-levels}.
struct Weierstrass {
  double beta = 0.5;
  int levels = 36;
  double operator()(cplx z) const {
    double s = 0;
    for (int j = 0; j < levels; ++j) {
      const double f = std::ldexp(1.0, j);
      s += std::pow(f, -beta) * (std::cos(f * z.real() + 0.7 * j) + std::cos(f * z.imag() + 1.3 * j));
    }
    return s;
  }
  double sup_bound() const {
    double s = 0;
    for (int j = 0; j < levels; ++j) s += 2 * std::pow(2.0, -beta * j);
    return s;
  }
};

// Lower estimate of v_β on random pairs in [0,re_max]x[-im_max,im_max] at
// log-uniform distances in [1e-8, 1].
template <class Fn>
double sampled_holder_constant(Fn&& g, double beta, double re_max, double im_max, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double v = 0;
  for (int i = 0; i < samples; ++i) {
    cplx a(re_max * u(rng), im_max * (2 * u(rng) - 1));
    double d = std::pow(10.0, -8 * u(rng));
    cplx b = a + std::polar(d, 2 * pi * u(rng));
    v = std::max(v, std::abs(g(a) - g(b)) / std::pow(d, beta));
  }
  return v;
}

inline double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }

template <class Fn>
std::vector<double> sample_on(const JuliaCloud& grid, Fn&& fn) {
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) v[i] = fn(grid.points[i]);
  return v;
}

}  // namespace rtd
