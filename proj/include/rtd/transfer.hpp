#pragma once

// σ_τ-metric transfer operators on fiber grids.
//
// The operator for fiber x maps densities on grid_x to densities on
// grid_{θx}. Each row (a target point w) sums |f'(z_k)|_τ^{-t} over the
// branches |k| ≤ K_max, each branch reading the density at its nearest grid
// point. Rows are stored in CSR form.

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
#include "rtd/julia.hpp"
#include "rtd/maps.hpp"
#include "rtd/nevanlinna.hpp"

namespace rtd {

struct PotentialConfig {
  double t = 3.0;
  double tau = 0.5;
  double beta = 0.5;
  double delta = 0.0;  // variation scale; 0 means "derive from M, K"
  int K_max = 200;
  double eps_tail = 0.05;

  double tau_hat(const FiberMap& f) const { return f.alpha1 + tau; }
};

// Throws errc::config naming the violated constraint.
inline void validate(const PotentialConfig& c, const FiberMap& f) {
  require(c.t > 0 && c.tau > 0, errc::config, "t and τ must be positive");
  require(c.tau < f.alpha2, errc::config, "τ must be below α₂");
  require(f.alpha() > 0 && c.t > f.order / f.alpha(), errc::config, "t must exceed ρ/α");
  require(c.t * c.tau_hat(f) > f.order, errc::config, "t·τ̂ must exceed ρ");
  require(c.beta > 0 && c.beta <= 1, errc::config, "β must lie in (0, 1]");
  require(c.K_max >= 0, errc::config, "K_max must be nonnegative");
  require(c.eps_tail > 0, errc::config, "ε_tail must be positive");
  require(c.delta >= 0, errc::config, "δ must be nonnegative");
}

// |f'(z)|·((1+|z|)/(1+|f(z)|))^τ
inline double sigma_tau_deriv(const FiberMap& f, cplx z, double tau) {
  ExtendedComplex fz = eval(f, z);
  require(!fz.infinite, errc::pole_proximity, "σ_τ derivative at a pole");
  double d = std::abs(deriv(f, z));
  require(d > 0 && std::isfinite(d), errc::precondition, "σ_τ derivative at a critical point");
  return d * std::pow((1 + std::abs(z)) / (1 + std::abs(fz.value)), tau);
}

using FiberGrid = JuliaCloud;
using GridPtr = std::shared_ptr<const FiberGrid>;

struct GridDensity {
  GridPtr grid;
  std::vector<double> values;

  static GridDensity constant(GridPtr g, double c) {
    std::size_t n = g->size();
    return {std::move(g), std::vector<double>(n, c)};
  }
  std::size_t size() const { return values.size(); }
  double sup() const {
    double s = 0;
    for (double v : values) s = std::max(s, std::abs(v));
    return s;
  }
};

struct GridMeasure {
  GridPtr grid;
  std::vector<double> weights;

  double mass() const {
    double m = 0;
    for (double w : weights) m += w;
    return m;
  }
  double integrate(std::span<const double> g) const {
    require(g.size() == weights.size(), errc::unregistered_grid, "measure and density live on different grids");
    double s = 0;
    for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * weights[i];
    return s;
  }
  double integrate(const GridDensity& g) const {
    require(g.grid == grid, errc::unregistered_grid, "measure and density live on different grids");
    return integrate(g.values);
  }

  static GridMeasure uniform(GridPtr g, double radius = std::numeric_limits<double>::infinity()) {
    std::vector<double> w(g->size(), 0.0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < g->size(); ++i)
      if (std::abs(g->points[i]) <= radius) {
        w[i] = 1.0;
        ++n;
      }
    require(n > 0, errc::zero_normalizer, "no grid point inside the reference radius");
    for (double& v : w) v /= double(n);
    return {std::move(g), std::move(w)};
  }
};

// Inner radius beyond which all omitted branches |k| > K_max lie.
inline double omitted_branch_radius(const FiberMap& f, int K_max) {
  switch (f.family) {
    case Family::RandomExp: return 2 * pi * K_max;
    case Family::RandomTangent: return pi * K_max;
    default: return std::numeric_limits<double>::infinity();
  }
}

// κ^t (1+|w|)^{-(α₂-τ)t} · Σ_{|z|>R} |z|^{-τ̂t}. Valid where balanced growth
// holds with the declared κ, which is the case on the Julia set.
inline double truncated_tail_bound(const FiberMap& f, cplx w, const PotentialConfig& c, int K_max) {
  const double s = c.t * c.tau_hat(f);
  require(s > f.order, errc::divergence, "τ̂t must exceed the order");
  if (!has_lattice(f)) return 0.0;
  const double R = omitted_branch_radius(f, K_max);
  if (R <= 0) return std::numeric_limits<double>::infinity();
  return std::pow(f.kappa, c.t) * std::pow(1 + std::abs(w), -(f.alpha2 - c.tau) * c.t) * lattice_tail(f, w, s, R);
}

// Weighted branches |f'(z_k)|_τ^{-t} over |k| ≤ K_max in ascending k.
struct WeightedBranch {
  int k = 0;
  cplx z;
  double weight = 0;
};

inline std::vector<WeightedBranch> weighted_branches(const FiberMap& f, cplx w, const PotentialConfig& c) {
  std::vector<WeightedBranch> out;
  if (!has_lattice(f)) {
    auto range = *finite_branch_range(f);
    for (const Branch& b : preimages(f, w, range.first, range.second))
      out.push_back({b.k, b.z, std::pow(sigma_tau_deriv(f, b.z, c.tau), -c.t)});
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.k < b.k; });
    return out;
  }
  BranchLattice lat = branch_lattice(f, w);
  // |f'| is constant along the lattice for both transcendental families
  const double fd = std::abs(deriv(f, lat.base));
  require(fd > 0, errc::precondition, "critical value as target");
  const double common = std::pow(fd, -c.t) * std::pow(1 + std::abs(w), c.tau * c.t);
  const double s = c.tau * c.t;
  out.reserve(std::size_t(2 * c.K_max + 1));
  for (int k = -c.K_max; k <= c.K_max; ++k) {
    cplx z = lat.base + double(k) * lat.period;
    out.push_back({k, z, common * std::exp(-s * std::log1p(std::abs(z)))});
  }
  return out;
}

// ℒ1(w) = Σ_{|k|≤K_max} |f'(z_k)|_τ^{-t} at an arbitrary point.
inline double transfer_one(const FiberMap& f, cplx w, const PotentialConfig& c) {
  double s = 0;
  for (const auto& b : weighted_branches(f, w, c)) s += b.weight;
  return s;
}

struct TransferBudget {
  double tail = 0;           // max over rows of the analytic tail bound times ‖g‖∞
  double interpolation = 0;  // max over rows of Σ W_k d_k^β times v_β(g)
  double out_of_support = 0; // max over rows of the branch mass read outside D_{R_max}
};

class TransferOperator {
 public:
  TransferOperator() = default;

  TransferOperator(const FiberMap& f, GridPtr source, GridPtr target, const PotentialConfig& c)
      : map_(f), source_(std::move(source)), target_(std::move(target)), cfg_(c) {
    require(source_ && target_ && !source_->empty() && !target_->empty(), errc::unregistered_grid,
            "operator needs nonempty grids");
    const std::size_t rows = target_->size();
    row_ptr_.reserve(rows + 1);
    row_ptr_.push_back(0);
    row_total_.resize(rows);
    tail_.resize(rows);
    interp_.resize(rows);
    outside_.resize(rows);
    std::vector<std::pair<std::uint32_t, double>> entries;
    std::vector<std::uint32_t> cols;
    for (std::size_t r = 0; r < rows; ++r) {
      const cplx w = target_->points[r];
      std::vector<WeightedBranch> bs = weighted_branches(f, w, c);
      cols.assign(bs.size(), 0);
      assign_nearest(bs, cols);
      entries.clear();
      double total = 0, interp = 0, outside = 0;
      for (std::size_t i = 0; i < bs.size(); ++i) {
        total += bs[i].weight;
        if (std::abs(bs[i].z) > source_->R_max) {
          outside += bs[i].weight;
        } else {
          double d = std::abs(bs[i].z - source_->points[cols[i]]);
          interp += bs[i].weight * std::pow(d, c.beta);
        }
        if (!entries.empty() && entries.back().first == cols[i]) entries.back().second += bs[i].weight;
        else entries.emplace_back(cols[i], bs[i].weight);
      }
      // runs of one column are contiguous in k except at exact Voronoi ties
      std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      std::size_t start = col_.size();
      for (const auto& e : entries) {
        if (col_.size() > start && col_.back() == e.first) val_.back() += e.second;
        else {
          col_.push_back(e.first);
          val_.push_back(e.second);
        }
      }
      row_ptr_.push_back(std::uint32_t(col_.size()));
      row_total_[r] = total;
      tail_[r] = truncated_tail_bound(f, w, c, c.K_max);
      interp_[r] = interp;
      outside_[r] = outside;
    }
  }

  const FiberMap& map() const { return map_; }
  const GridPtr& source() const { return source_; }
  const GridPtr& target() const { return target_; }
  const PotentialConfig& config() const { return cfg_; }
  std::size_t rows() const { return row_total_.size(); }
  std::size_t cols() const { return source_->size(); }
  std::size_t nonzeros() const { return val_.size(); }

  std::span<const std::uint32_t> row_cols(std::size_t r) const {
    return {col_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const double> row_vals(std::size_t r) const {
    return {val_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  // ℒ1 on the target grid (truncated sum, no interpolation involved)
  std::span<const double> one() const { return row_total_; }
  std::span<const double> tail_bounds() const { return tail_; }
  std::span<const double> interpolation_coefficients() const { return interp_; }
  std::span<const double> out_of_support_mass() const { return outside_; }

  double max_tail() const { return *std::max_element(tail_.begin(), tail_.end()); }

  void apply(std::span<const double> g, std::span<double> out) const {
    require(g.size() == cols() && out.size() == rows(), errc::unregistered_grid, "density on the wrong grid");
    for (std::size_t r = 0; r < rows(); ++r) {
      double s = 0;
      for (std::uint32_t i = row_ptr_[r]; i < row_ptr_[r + 1]; ++i) s += val_[i] * g[col_[i]];
      out[r] = s;
    }
  }
  std::vector<double> apply(std::span<const double> g) const {
    std::vector<double> out(rows());
    apply(g, out);
    return out;
  }

  // Pᵀν: pulls target weights back onto the source grid.
  std::vector<double> apply_transpose(std::span<const double> nu) const {
    require(nu.size() == rows(), errc::unregistered_grid, "measure on the wrong grid");
    std::vector<double> out(cols(), 0.0);
    for (std::size_t r = 0; r < rows(); ++r) {
      if (nu[r] == 0) continue;
      for (std::uint32_t i = row_ptr_[r]; i < row_ptr_[r + 1]; ++i) out[col_[i]] += val_[i] * nu[r];
    }
    return out;
  }

 private:
  // Nearest source point per branch. Branch points lie on a line and
  // Voronoi cells are convex, so equal endpoints settle a whole k-interval.
  void assign_nearest(const std::vector<WeightedBranch>& bs, std::vector<std::uint32_t>& cols) const {
    if (bs.empty()) return;
    const bool line = has_lattice(map_);
    auto nn = [&](std::size_t i) { return std::uint32_t(source_->nearest(bs[i].z)); };
    if (!line) {
      for (std::size_t i = 0; i < bs.size(); ++i) cols[i] = nn(i);
      return;
    }
    struct Span {
      std::size_t lo, hi;
      std::uint32_t clo, chi;
    };
    std::vector<Span> stack;
    cols.front() = nn(0);
    cols.back() = nn(bs.size() - 1);
    stack.push_back({0, bs.size() - 1, cols.front(), cols.back()});
    while (!stack.empty()) {
      Span s = stack.back();
      stack.pop_back();
      if (s.clo == s.chi) {
        for (std::size_t i = s.lo; i <= s.hi; ++i) cols[i] = s.clo;
        continue;
      }
      if (s.hi - s.lo <= 1) continue;
      std::size_t mid = (s.lo + s.hi) / 2;
      cols[mid] = nn(mid);
      stack.push_back({mid, s.hi, cols[mid], s.chi});
      stack.push_back({s.lo, mid, s.clo, cols[mid]});
    }
  }

  FiberMap map_;
  GridPtr source_, target_;
  PotentialConfig cfg_;
  std::vector<std::uint32_t> row_ptr_;
  std::vector<std::uint32_t> col_;
  std::vector<double> val_;
  std::vector<double> row_total_, tail_, interp_, outside_;
};

struct HolderNorm {
  double sup = 0;
  double v_beta = 0;
  double norm = 0;
  std::size_t pairs = 0;
  bool sparse = false;  // no grid pair within δ
};

// sup over grid pairs with 0 < |w₁-w₂| ≤ δ of |g(w₁)-g(w₂)|/|w₁-w₂|^β.
inline HolderNorm holder_norm(const FiberGrid& grid, std::span<const double> g, double beta, double delta) {
  require(g.size() == grid.size(), errc::unregistered_grid, "density on the wrong grid");
  HolderNorm h;
  for (double v : g) h.sup = std::max(h.sup, std::abs(v));
  std::vector<std::size_t> near;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.index.within(grid.points[i], delta, near);
    for (std::size_t j : near) {
      if (j <= i) continue;
      double d = std::abs(grid.points[i] - grid.points[j]);
      if (d == 0) continue;
      ++h.pairs;
      h.v_beta = std::max(h.v_beta, std::abs(g[i] - g[j]) / std::pow(d, beta));
    }
  }
  h.sparse = h.pairs == 0;
  h.norm = h.sup + h.v_beta;
  return h;
}

inline HolderNorm holder_norm(const GridDensity& g, double beta, double delta) {
  return holder_norm(*g.grid, g.values, beta, delta);
}

struct TransferResult {
  GridDensity value;
  TransferBudget budget;
};

// ℒg with its error budget; the tail bound is reported, never added.
inline TransferResult apply_transfer(const TransferOperator& op, const GridDensity& g,
                                     std::optional<double> v_beta_of_g = std::nullopt) {
  require(g.grid == op.source(), errc::unregistered_grid, "density is not on the operator's source grid");
  for (double v : g.values) require(std::isfinite(v), errc::precondition, "density has non-finite values");
  TransferResult res{{op.target(), op.apply(g.values)}, {}};
  const double sup = g.sup();
  const double vb = v_beta_of_g.value_or(0.0);
  for (std::size_t r = 0; r < op.rows(); ++r) {
    res.budget.tail = std::max(res.budget.tail, op.tail_bounds()[r] * sup);
    res.budget.interpolation = std::max(res.budget.interpolation, op.interpolation_coefficients()[r] * vb);
    res.budget.out_of_support = std::max(res.budget.out_of_support, op.out_of_support_mass()[r]);
  }
  require(res.budget.tail <= op.config().eps_tail * std::max(sup, 1e-300) || sup == 0, errc::tail_budget,
          "tail budget exceeds ε_tail; increase K_max");
  return res;
}

inline GridDensity normalized_apply(const TransferOperator& op, const GridDensity& g, double lambda) {
  require(lambda > 0 && std::isfinite(lambda), errc::precondition, "λ must be positive");
  require(g.grid == op.source(), errc::unregistered_grid, "density is not on the operator's source grid");
  GridDensity out{op.target(), op.apply(g.values)};
  for (double& v : out.values) v /= lambda;
  return out;
}

struct DualResult {
  GridMeasure measure;  // normalized to mass 1
  double lambda = 0;    // ν(ℒ1)
  std::vector<double> raw;  // Pᵀν before normalization
};

inline DualResult dual_apply(const TransferOperator& op, const GridMeasure& nu) {
  require(nu.grid == op.target(), errc::unregistered_grid, "measure is not on the operator's target grid");
  require(nu.mass() > 0, errc::zero_normalizer, "measure has no mass");
  DualResult d;
  d.raw = op.apply_transpose(nu.weights);
  for (double v : d.raw) d.lambda += v;
  require(d.lambda > 0 && std::isfinite(d.lambda), errc::zero_normalizer, "ν(ℒ1) vanished");
  d.measure = {op.source(), d.raw};
  for (double& w : d.measure.weights) w /= d.lambda;
  return d;
}

// ---------------------------------------------------------------------------
// Envelope of ℒ1

struct EnvelopeReport {
  double exponent = 0;  // fitted decay of ℒ1 in (1+|w|)
  double predicted = 0;
  double prefactor = 0;  // M₀ estimate: max ℒ1(w)(1+|w|)^{predicted}
  double r2 = 0;
  std::size_t samples = 0;
  bool vanishes = false;  // last decade below the first decade's minimum
  bool pass = false;
};

// samples: (map of fiber x, a Julia point w of fiber θx)
inline EnvelopeReport operator_sup_bound_check(std::span<const FiberMap> maps, std::span<const std::vector<cplx>> w,
                                               const PotentialConfig& c, double r_lo = 1.0, double r_hi = 50.0,
                                               double tolerance = 0.15) {
  require(maps.size() == w.size(), errc::precondition, "one sample set per fiber");
  EnvelopeReport rep;
  rep.predicted = (maps.front().alpha2 - c.tau) * c.t;
  std::vector<double> xs, ys;
  double first_min = std::numeric_limits<double>::infinity(), last_max = 0;
  const double first_edge = r_lo * std::pow(r_hi / r_lo, 0.1), last_edge = r_hi / std::pow(r_hi / r_lo, 0.1);
  for (std::size_t j = 0; j < maps.size(); ++j) {
    for (cplx p : w[j]) {
      double m = std::abs(p);
      if (m < r_lo || m > r_hi) continue;
      double v = transfer_one(maps[j], p, c);
      xs.push_back(std::log1p(m));
      ys.push_back(std::log(v));
      rep.prefactor = std::max(rep.prefactor, v * std::pow(1 + m, rep.predicted));
      if (m <= first_edge) first_min = std::min(first_min, v);
      if (m >= last_edge) last_max = std::max(last_max, v);
    }
  }
  rep.samples = xs.size();
  require(rep.samples >= 3, errc::insufficient_samples, "too few samples inside the radius window");
  LinearFit fit = linear_fit(xs, ys);
  rep.exponent = -fit.slope;
  rep.r2 = fit.r2;
  rep.vanishes = last_max < first_min;
  rep.pass = std::isfinite(rep.prefactor) && std::abs(rep.exponent - rep.predicted) <= tolerance * rep.predicted;
  return rep;
}

}  // namespace rtd
