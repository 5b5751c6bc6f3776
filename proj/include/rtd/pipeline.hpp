#pragma once

// Named experiment pipelines, their CSV artifacts and the content manifest.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "rtd/cones.hpp"
#include "rtd/config.hpp"
#include "rtd/distortion.hpp"
#include "rtd/gibbs.hpp"
#include "rtd/julia.hpp"
#include "rtd/nevanlinna.hpp"
#include "rtd/observables.hpp"
#include "rtd/orbit.hpp"
#include "rtd/stats.hpp"
#include "rtd/transfer.hpp"

namespace rtd {

// ---------------------------------------------------------------------------
// CSV and hashing

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// RFC 4180: quote fields containing a comma, quote or line break.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : cols_(header.size()) { row_strings(header); }

  template <class... Ts>
  Csv& row(const Ts&... cells) {
    require(sizeof...(Ts) == cols_, errc::precondition, "row width differs from the header");
    std::vector<std::string> v{cell(cells)...};
    row_strings(v);
    return *this;
  }

  const std::string& str() const { return text_; }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double v) { return csv_number(v); }
  static std::string cell(bool b) { return b ? "true" : "false"; }
  template <class I>
    requires std::is_integral_v<I>
  static std::string cell(I v) {
    return std::to_string(v);
  }

  void row_strings(const std::vector<std::string>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) text_ += ',';
      text_ += csv_field(v[i]);
    }
    text_ += "\r\n";
  }

  std::size_t cols_;
  std::string text_;
};

// Splits RFC 4180 text into rows of fields.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  require(EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) == 1, errc::precondition,
          "SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(bool(in), errc::precondition, "cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Artifacts {
 public:
  explicit Artifacts(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    require(bool(out), errc::precondition, "cannot write " + (dir_ / name).string());
    out << content;
    files_[name] = content;
  }

  bool has(const std::string& name) const { return files_.count(name) > 0; }
  const std::string& content(const std::string& name) const { return files_.at(name); }
  const std::filesystem::path& dir() const { return dir_; }

  // manifest.csv covers every file written through this object.
  std::string write_manifest() {
    Csv m({"file", "bytes", "sha256"});
    for (const auto& [name, content] : files_) m.row(name, content.size(), sha256_hex(content));
    std::ofstream out(dir_ / "manifest.csv", std::ios::binary);
    out << m.str();
    return m.str();
  }

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::string> files_;
};

// ---------------------------------------------------------------------------
// Plot data: long-format (series, x, y) views of report CSVs.

struct PlotSpec {
  std::string source;
  std::string series_column;  // empty: the series is the source stem
  std::string x, y;
};

inline const std::vector<PlotSpec>& plot_specs() {
  static const std::vector<PlotSpec> specs{
      {"fmt_margins.csv", "target", "r", "margin"},
      {"lambda.csv", "", "fiber", "lambda"},
      {"density_convergence.csv", "", "k", "difference"},
      {"correlations.csv", "", "n", "value"},
      {"clt_quantiles.csv", "", "normal", "sample"},
  };
  return specs;
}

inline std::string plot_data(const std::string& csv_text, const PlotSpec& spec) {
  auto rows = parse_csv(csv_text);
  require(!rows.empty(), errc::precondition, "empty report " + spec.source);
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(rows[0].begin(), rows[0].end(), name);
    require(it != rows[0].end(), errc::precondition, spec.source + " has no column " + name);
    return std::size_t(it - rows[0].begin());
  };
  const std::size_t xi = column(spec.x), yi = column(spec.y);
  const std::size_t si = spec.series_column.empty() ? 0 : column(spec.series_column);
  const std::string stem = spec.source.substr(0, spec.source.rfind('.'));
  Csv out({"series", "x", "y"});
  for (std::size_t r = 1; r < rows.size(); ++r) {
    std::string series = spec.series_column.empty() ? stem : stem + ":" + rows[r][si];
    out.row(series, rows[r][xi], rows[r][yi]);
  }
  return out.str();
}

// Converts the named reports; every name must be present.
inline std::vector<std::string> emit_plot_data(Artifacts& art, const std::vector<std::string>& sources) {
  std::vector<std::string> written;
  for (const std::string& src : sources) {
    auto it = std::find_if(plot_specs().begin(), plot_specs().end(), [&](const PlotSpec& s) { return s.source == src; });
    require(it != plot_specs().end(), errc::precondition, "no plot view for " + src);
    require(art.has(src), errc::precondition, "missing artifact " + src);
    std::string name = "plot_" + src;
    art.write(name, plot_data(art.content(src), *it));
    written.push_back(name);
  }
  return written;
}

// ---------------------------------------------------------------------------
// Pipelines

struct Check {
  std::string pipeline;
  std::string name;
  bool pass = false;
  double value = 0;
  std::string detail;
};

struct RunResult {
  std::vector<Check> checks;
  std::string manifest;
  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
};

class PipelineContext {
 public:
  PipelineContext(const ExperimentConfig& cfg, Artifacts& art) : cfg_(cfg), art_(art) {}

  const ExperimentConfig& cfg() const { return cfg_; }
  Artifacts& artifacts() { return art_; }
  std::vector<Check>& checks() { return checks_; }
  std::vector<std::string>& plot_sources() { return plots_; }

  void check(const std::string& pipeline, const std::string& name, bool pass, double value,
             const std::string& detail = "") {
    checks_.push_back({pipeline, name, pass, value, detail});
  }

  const OrbitWindow& window() {
    if (!window_) {
      WindowSpec ws;
      ws.count = cfg_.geometry.window;
      ws.depth = cfg_.geometry.depth;
      window_ = std::make_unique<OrbitWindow>(build_window(driving_system(cfg_), base_point(cfg_),
                                                           family_config(cfg_), ws,
                                                           julia_params(cfg_, cfg_.geometry.grid_resolution),
                                                           cfg_.potential));
    }
    return *window_;
  }

  const GibbsFamily& gibbs() {
    if (!gibbs_) gibbs_ = std::make_unique<GibbsFamily>(build_gibbs(window(), reference()));
    return *gibbs_;
  }

  ReferenceSpec reference() const { return {Reference::UniformInDisk, cfg_.geometry.R0}; }

  // Fibers whose ν and ρ both sit at least `margin` steps from the window ends.
  std::size_t settled_first() const { return 25; }
  std::size_t settled_last() { return window().count() - 25; }

 private:
  const ExperimentConfig& cfg_;
  Artifacts& art_;
  std::vector<Check> checks_;
  std::vector<std::string> plots_;
  std::unique_ptr<OrbitWindow> window_;
  std::unique_ptr<GibbsFamily> gibbs_;
};

inline std::vector<double> log_radii(double lo, double hi, int n) {
  std::vector<double> r;
  for (int i = 0; i < n; ++i) r.push_back(lo * std::pow(hi / lo, double(i) / double(n - 1)));
  return r;
}

inline void run_check_conditions(PipelineContext& ctx) {
  const auto& cfg = ctx.cfg();
  const OrbitWindow& w = ctx.window();
  Csv out({"condition", "value", "pass"});
  auto record = [&](const std::string& name, double value, bool pass) {
    out.row(name, value, pass);
    ctx.check("check-conditions", name, pass, value);
  };
  bool potential_ok = true;
  for (const FiberMap& f : w.maps) {
    try {
      validate(cfg.potential, f);
    } catch (const error&) {
      potential_ok = false;
    }
  }
  record("potential_constraints_all_fibers", double(w.maps.size()), potential_ok);
  double kappa_fit = 0;
  bool balanced = true;
  for (std::size_t j = 0; j <= w.count(); j += 10) {
    auto pts = w.grids[j]->points;
    if (pts.size() < 100) continue;
    auto rep = check_balanced_growth(w.maps[j], pts);
    kappa_fit = std::max(kappa_fit, rep.kappa_fit);
    balanced = balanced && rep.pass;
  }
  record("balanced_growth_kappa", kappa_fit, balanced);
  auto gp = check_growth_profile(cfg.family.growth, log_radii(1, 1000, 40));
  record("growth_profile_omega_increasing", gp.last_ratio, gp.omega_increasing && gp.log_ratio_decreasing);
  auto ex = expansion_constants(w.grids, 10);
  record("expansion_gamma_lower", ex.gamma_lo, ex.pass);
  double tail = 0;
  for (const auto& op : w.ops) tail = std::max(tail, op.max_tail());
  record("truncated_tail_bound", tail, tail <= cfg.potential.eps_tail);
  auto mix = mixing_time(std::span(w.grids).first(std::min<std::size_t>(w.grids.size(), 12)), 0.5, cfg.geometry.R0,
                         w.julia.cover());
  record("mixing_time", double(mix.N), mix.found);
  ctx.artifacts().write("conditions.csv", out.str());
}

inline void run_julia(PipelineContext& ctx) {
  const OrbitWindow& w = ctx.window();
  for (std::size_t j : {std::size_t(0), w.count() / 2}) {
    Csv dump({"re", "im", "depth", "log_deriv"});
    const FiberGrid& g = *w.grids[j];
    for (std::size_t i = 0; i < g.size(); ++i) dump.row(g.points[i].real(), g.points[i].imag(), g.depth[i], g.log_deriv[i]);
    ctx.artifacts().write("julia_cloud_" + std::to_string(j) + ".csv", dump.str());
  }
  auto mins = min_log_expansion(w.grids, 10);
  Csv exp_csv({"n", "min_log_deriv"});
  for (std::size_t n = 0; n < mins.size(); ++n) exp_csv.row(n + 1, mins[n]);
  ctx.artifacts().write("expansion.csv", exp_csv.str());
  auto ex = expansion_constants(w.grids, 10);
  auto mix = mixing_time(std::span(w.grids).first(std::min<std::size_t>(w.grids.size(), 12)), 0.5,
                         ctx.cfg().geometry.R0, w.julia.cover());
  const double residual = forward_chain_residual(std::span(w.maps).first(w.count()), [&] {
    std::vector<JuliaCloud> c;
    for (std::size_t j = 0; j <= std::min<std::size_t>(w.count(), 5); ++j) c.push_back(*w.grids[j]);
    return c;
  }());
  auto post = postsingular_points(std::span(w.maps).first(std::min<std::size_t>(w.maps.size(), 1)));
  const double d0 = delta0_estimate(*w.grids[1], post);
  Csv sum({"quantity", "value"});
  sum.row("points_fiber_0", w.grids[0]->size());
  sum.row("c", ex.c).row("gamma", ex.gamma).row("gamma_lo", ex.gamma_lo).row("r2", ex.r2);
  sum.row("mixing_N", mix.N).row("forward_residual", residual).row("delta0", d0);
  ctx.check("julia", "expansion_gamma_above_one", ex.pass, ex.gamma);
  ctx.check("julia", "forward_chain_residual", residual <= 1e-8, residual);

  // fixtures
  {
    JuliaParams jp;
    jp.R_max = 2.0;
    std::vector<FiberMap> maps(12, FiberMap::square());
    cplx seed[] = {repelling_fixed_point(maps[0])};
    auto cloud = approximate_julia(maps, 12, seed, jp);
    std::vector<cplx> circle;
    for (int k = 0; k < 4096; ++k) circle.push_back(std::polar(1.0, 2 * pi * k / 4096.0));
    const double hd = hausdorff_distance(cloud.points, circle);
    sum.row("square_fixture_hausdorff", hd);
    ctx.check("julia", "square_fixture_hausdorff", hd <= 0.01, hd);
  }
  {
    JuliaParams jp;
    std::vector<FiberMap> maps(11, FiberMap::linear(2.0));
    std::vector<cplx> seeds;
    for (int a = -3; a <= 3; ++a)
      for (int b = -3; b <= 3; ++b) seeds.emplace_back(0.5 * a, 0.5 * b);
    auto clouds = pullback_sweep(maps, seeds, jp);
    auto lx = expansion_constants(clouds, 10);
    sum.row("linear_fixture_gamma", lx.gamma);
    ctx.check("julia", "linear_fixture_gamma", std::abs(lx.gamma - 2) <= 0.1, lx.gamma);
  }
  ctx.artifacts().write("julia_summary.csv", sum.str());
}

inline void run_nevanlinna(PipelineContext& ctx) {
  const auto& cfg = ctx.cfg();
  const FiberMap f = FiberMap::exp(cfg.nevanlinna.eta, cfg.family.kappa);
  auto tab = characteristic(f, cfg.nevanlinna.radii);
  Csv ct({"r", "area", "characteristic", "err"});
  for (std::size_t i = 0; i < tab.radii.size(); ++i) ct.row(tab.radii[i], tab.area[i], tab.value[i], tab.error[i]);
  ctx.artifacts().write("characteristic.csv", ct.str());
  Csv fm({"target", "r", "lhs", "rhs", "margin"});
  bool fmt_ok = true;
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t q = 0; q < cfg.nevanlinna.targets.size(); ++q) {
    auto rep = fmt_check(f, cfg.nevanlinna.targets[q], cfg.nevanlinna.radii);
    for (const auto& r : rep.rows) fm.row(q, r.r, r.lhs, r.rhs, r.margin);
    fmt_ok = fmt_ok && rep.pass;
    worst = std::min(worst, rep.min_margin);
  }
  ctx.artifacts().write("fmt_margins.csv", fm.str());
  ctx.plot_sources().push_back("fmt_margins.csv");
  ctx.check("nevanlinna", "fmt_margin", fmt_ok, worst);

  Csv ts({"s", "R", "direct", "stieltjes", "rel_diff"});
  double worst_diff = 0;
  for (double s : {1.5, 2.0, 3.0})
    for (double R : {1.0, 5.0, 10.0}) {
      auto t = tail_sum(f, cfg.nevanlinna.eta, s, R);
      ts.row(s, R, t.direct, t.stieltjes, t.rel_diff);
      worst_diff = std::max(worst_diff, t.rel_diff);
    }
  ctx.artifacts().write("tail_sums.csv", ts.str());
  const double zeta = tail_sum(f, cfg.nevanlinna.eta, 2.0, 1.0).direct;
  ctx.check("nevanlinna", "tail_sum_closed_form", std::abs(zeta - 1.0 / 12.0) <= 1e-8, zeta);
  ctx.check("nevanlinna", "tail_sum_dual_agreement", worst_diff <= 1e-8, worst_diff);
}

inline void run_gibbs(PipelineContext& ctx) {
  const auto& cfg = ctx.cfg();
  const OrbitWindow& w = ctx.window();
  const GibbsFamily& g = ctx.gibbs();
  const std::size_t lo = ctx.settled_first(), hi = ctx.settled_last();

  Csv lam({"fiber", "lambda", "log_cumulative"});
  double acc = 0;
  for (std::size_t j = 0; j < g.lambda.size(); ++j) lam.row(j, g.lambda[j], acc += std::log(g.lambda[j]));
  ctx.artifacts().write("lambda.csv", lam.str());
  ctx.plot_sources().push_back("lambda.csv");

  const std::size_t mid = (lo + hi) / 2;
  Csv meas({"re", "im", "weight"}), dens({"re", "im", "value"});
  for (std::size_t i = 0; i < w.grids[mid]->size(); ++i) {
    const cplx z = w.grids[mid]->points[i];
    meas.row(z.real(), z.imag(), g.nu[mid].weights[i]);
    dens.row(z.real(), z.imag(), g.rho[mid].values[i]);
  }
  ctx.artifacts().write("measure_" + std::to_string(mid) + ".csv", meas.str());
  ctx.artifacts().write("density_" + std::to_string(mid) + ".csv", dens.str());

  std::size_t depths[] = {5, 10, 15, 20};
  auto gauge = depth_gauge(w, lo, depths, 5, ctx.reference());
  Csv conv({"depth", "bl_distance"});
  for (std::size_t i = 0; i < gauge.depth.size(); ++i) conv.row(gauge.depth[i], gauge.distance[i]);
  ctx.artifacts().write("convergence.csv", conv.str());
  ctx.check("gibbs", "depth_gauge_decreasing", gauge.decreasing, gauge.distance.back());

  // reference independence
  auto a = conformal_measure(w, lo, 30, ctx.reference());
  auto b = conformal_measure(w, lo, 30, {Reference::HeaviestAtom, cfg.geometry.R0});
  const double ref_bl = bl_distance(a.nu, b.nu);
  ctx.check("gibbs", "reference_independence", ref_bl <= 2e-3, ref_bl);

  // conformality against an independently pulled back measure on the next fiber
  {
    const std::size_t j = lo;
    auto nu_x = conformal_measure(w, j, 25, ctx.reference());
    auto nu_next = conformal_measure(w, j + 1, 30, ctx.reference());
    const double lam_x = nu_next.nu.integrate(w.ops[j].one());
    std::vector<std::vector<double>> gs;
    for (int s = 0; s < 20; ++s) gs.push_back(sample_on(*w.grids[j], RandomField::make(cfg.seed + s)));
    const double res = conformality_residual(w.ops[j], nu_x.nu, nu_next.nu, lam_x, gs);
    ctx.check("gibbs", "conformality_residual", res <= 5e-3, res);
  }

  // λ max/min over 100 fibers at two grid resolutions
  {
    Csv rr({"resolution", "lambda_min", "lambda_max", "ratio"});
    double ratios[2];
    const double res[2] = {cfg.geometry.grid_resolution, cfg.geometry.refined_resolution};
    for (int q = 0; q < 2; ++q) {
      WindowSpec ws;
      ws.count = 130;
      ws.depth = cfg.geometry.depth;
      auto wq = build_window(driving_system(cfg), base_point(cfg), family_config(cfg), ws, julia_params(cfg, res[q]),
                             cfg.potential);
      auto gq = build_gibbs(wq, ctx.reference());
      auto [mn, mx] = std::minmax_element(gq.lambda.begin(), gq.lambda.begin() + 100);
      ratios[q] = *mx / *mn;
      rr.row(res[q], *mn, *mx, ratios[q]);
    }
    ctx.artifacts().write("lambda_refinement.csv", rr.str());
    const double rel = std::abs(ratios[1] - ratios[0]) / ratios[0];
    ctx.check("gibbs", "lambda_ratio_refinement", std::isfinite(ratios[0]) && rel <= 0.05, rel);
  }

  std::vector<GridMeasure> fam(g.nu.begin() + std::ptrdiff_t(lo), g.nu.begin() + std::ptrdiff_t(lo + 20));
  auto tr = tightness_check(fam, cfg.geometry.R0, log_radii(cfg.geometry.R0, cfg.geometry.R_max * 0.95, 8));
  ctx.check("gibbs", "tightness", tr.pass, tr.eps_fit, "inner mass " + csv_number(tr.min_inner_mass));

  auto dc = invariant_density(w, g.lambda, hi, 35, cfg.potential.beta, 0.01);
  Csv dcv({"k", "difference"});
  for (std::size_t k = 0; k < dc.diff.size(); ++k) dcv.row(k, dc.diff[k]);
  ctx.artifacts().write("density_convergence.csv", dcv.str());
  ctx.plot_sources().push_back("density_convergence.csv");
  ctx.check("gibbs", "density_geometric", dc.fit.rate < 1 && dc.fit.r2 >= 0.95, dc.fit.rate);

  std::vector<std::size_t> targets{hi - 10, hi - 5, hi};
  auto ub = uniform_bound_check(w, g.lambda, targets, 1, 30);
  Csv ubc({"n", "max_normalized_one"});
  for (std::size_t i = 0; i < ub.n.size(); ++i) ubc.row(ub.n[i], ub.max_value[i]);
  ctx.artifacts().write("uniform_bound.csv", ubc.str());
  ctx.check("gibbs", "uniform_bound_no_trend", ub.pass, ub.trend.slope);

  // every fiber whose next-fiber ν is settled
  std::vector<std::size_t> fibers;
  for (std::size_t j = 0; j + 1 <= hi; ++j) fibers.push_back(j);
  std::vector<double> radii{5, 8, 12, 18, 25};
  auto lb = lower_bound_diagnostics(w, g, fibers, radii, cfg.family.growth, 0.5);
  Csv lbc({"R", "measured_min", "expression"});
  for (std::size_t i = 0; i < lb.radii.size(); ++i) lbc.row(lb.radii[i], lb.measured_min[i], lb.expression[i]);
  ctx.artifacts().write("lower_bound.csv", lbc.str());
  ctx.check("gibbs", "lower_bound_constants", lb.pass, lb.A_emp);

  // operator envelope over 20 fibers, sampled at their own Julia points
  std::vector<FiberMap> maps;
  std::vector<std::vector<cplx>> samples;
  {
    const DrivingSystem sys = driving_system(cfg);
    const FamilyConfig fc = family_config(cfg);
    JuliaParams jp = julia_params(cfg, cfg.geometry.grid_resolution);
    jp.R_max = 60;
    for (int f = 0; f < 20; ++f) {
      const BasePoint x{0.05 * f + 0.013, cfg.driving.shift_seed, 0};
      std::vector<FiberMap> m;
      for (int j = 0; j < 25; ++j) m.push_back(fiber_map(fc, parameter_at(sys, advance(sys, x, j))));
      cplx seed[] = {repelling_fixed_point(m.back())};
      auto clouds = pullback_sweep(m, seed, jp);
      maps.push_back(m[0]);
      samples.push_back(clouds[1].points);
    }
  }
  auto env = operator_sup_bound_check(maps, samples, cfg.potential);
  Csv envc({"quantity", "value"});
  envc.row("exponent", env.exponent).row("predicted", env.predicted).row("r2", env.r2);
  ctx.artifacts().write("operator_envelope.csv", envc.str());
  ctx.check("gibbs", "operator_decay_envelope", env.pass, env.exponent);
}

struct ConeRun {
  ConeConstants constants;
  ContractionReport contraction;
};

inline ConeRun run_cones(PipelineContext& ctx) {
  const auto& cfg = ctx.cfg();
  const OrbitWindow& w = ctx.window();
  const GibbsFamily& g = ctx.gibbs();
  const std::size_t lo = ctx.settled_first(), hi = ctx.settled_last();
  const double beta = cfg.potential.beta;

  auto ex = expansion_constants(w.grids, 10);
  std::vector<std::size_t> targets{hi - 10, hi - 5, hi};
  auto ub = uniform_bound_check(w, g.lambda, targets, 1, 30);

  std::size_t dn[] = {1, 2, 4, 8};
  auto dist = distortion_check(w, hi, dn, w.julia.cover(), cfg.geometry.delta0);
  Csv dcsv({"n", "K"});
  for (std::size_t i = 0; i < dist.n.size(); ++i) dcsv.row(dist.n[i], dist.K[i]);
  ctx.artifacts().write("distortion.csv", dcsv.str());
  ctx.check("cones", "distortion_stable", dist.pass, dist.K_fit);
  const double K = dist.K.front();

  const double delta = variation_scale(ub.M_emp, K, beta, cfg.geometry.delta0);
  std::vector<std::size_t> fibers{lo, lo + 5, lo + 10, lo + 15};
  std::vector<double> r0{cfg.geometry.R0};
  auto lb = lower_bound_diagnostics(w, g, fibers, r0, cfg.family.growth, delta);

  EmpiricalInputs in{ub.M_emp, K, lb.A_emp, ex.c, ex.gamma, 1.0};
  ConeConstants k = compute_constants(in, beta, cfg.geometry.delta0, cfg.geometry.R0);
  const std::size_t N0 = std::size_t(k.N0);
  require(lo + 3 * N0 <= w.count(), errc::precondition, "window too short for 3 N0 steps");

  std::size_t ns[] = {N0, N0 + 1, 2 * N0};
  auto ci = cone_invariance_test(w, g, k, lo, ns, 50, cfg.seed);
  Csv cic({"n", "pass_fraction"});
  for (std::size_t i = 0; i < ci.n.size(); ++i) cic.row(ci.n[i], ci.pass_fraction[i]);
  ctx.artifacts().write("cone_invariance.csv", cic.str());
  ctx.check("cones", "cone_invariance", ci.pass, *std::min_element(ci.pass_fraction.begin(), ci.pass_fraction.end()));

  const std::size_t j2 = lo + N0;
  const double R = cfg.geometry.R0;
  k.a = mixing_floor(w, g.lambda, j2, N0, R, ci.images);
  k.eta = std::min({1.0 / 3.0, 1.0 / k.H, k.a / (2 * k.M)});
  std::vector<GridDensity> ones;
  for (std::size_t j = lo; j <= hi; ++j) ones.push_back({w.grids[j], normalized_one(w, g.lambda, j)});
  k.R1 = outer_radius(ones, k);
  std::size_t bowen_ok = 0;
  for (const auto& m : ci.images) bowen_ok += bowen_step_check(w, g, k, j2, m, N0, R).pass;
  ctx.check("cones", "bowen_step", bowen_ok == ci.images.size(), double(bowen_ok));

  // contraction on pairs of sampled members that already satisfy the C₀ test
  std::vector<std::vector<double>> members;
  const auto prev = normalized_one(w, g.lambda, lo);
  for (std::uint64_t s = 0; members.size() < 20 && s < 200; ++s) {
    auto m = sample_cone_member(g.nu[lo], k, cfg.seed + 1000 + s);
    if (cone_membership(m, g.nu[lo], k, prev).in_C0) members.push_back(std::move(m));
  }
  std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs;
  for (std::size_t i = 0; i + 1 < members.size(); i += 2) pairs.emplace_back(members[i], members[i + 1]);
  std::vector<std::size_t> cn;
  for (std::size_t n = 1; n <= 30 && lo + n <= w.count(); ++n) cn.push_back(n);
  auto cr = contraction_rate(w, g.lambda, lo, pairs, cn, beta, 0.01);
  Csv crc({"n", "D"});
  for (std::size_t i = 0; i < cr.n.size(); ++i) crc.row(cr.n[i], cr.D[i]);
  ctx.artifacts().write("contraction.csv", crc.str());
  ctx.check("cones", "contraction", cr.contracting && !pairs.empty(), cr.fit.rate);

  std::vector<cplx> pts;
  for (int a = 0; a < 10; ++a)
    for (int b = 0; b < 10; ++b) pts.emplace_back(0.37 * a, 0.41 * b);
  auto iso = isometry_control(pts, cn, beta, 0.5, cfg.seed);
  ctx.check("cones", "isometry_control_fails_contraction", !iso.contracting, iso.fit.rate);

  // two-norm inequality off-grid
  {
    const std::size_t T = lo;
    std::vector<cplx> samples;
    for (std::size_t i = 0; i < w.grids[T]->size() && samples.size() < 30; i += 19) samples.push_back(w.grids[T]->points[i]);
    Weierstrass wf{beta, 36};
    RandomField rf = RandomField::make(cfg.seed, 6, 1.0, 1.0);
    std::vector<TestObservable> gs{
        {wf, wf.sup_bound(), sampled_holder_constant(wf, beta, 30, 30, 20000, cfg.seed)},
        {rf, 1.0, sampled_holder_constant(rf, beta, 30, 30, 20000, cfg.seed)},
    };
    std::size_t tn[] = {1, 2, 3, 4};
    TwoNormConfig tc{K, ex.c, ex.gamma, beta, 1e-6, 6, 2};
    auto tw = two_norm_check(std::span(w.maps).first(T), samples, gs, tn, cfg.potential, tc);
    Csv twc({"n", "observable", "lhs", "rhs", "margin"});
    for (const auto& r : tw.rows) twc.row(r.n, r.g, r.lhs, r.rhs, r.margin);
    ctx.artifacts().write("two_norm.csv", twc.str());
    ctx.check("cones", "two_norm_margin", tw.min_margin >= 0, tw.min_margin);
    ctx.check("cones", "two_norm_decay", std::abs(tw.decay - tw.predicted) <= 0.2 * tw.predicted, tw.decay);
  }

  std::ostringstream led;
  const std::string inputs = sha256_hex(csv_number(in.M) + csv_number(in.K) + csv_number(in.A_ball) +
                                        csv_number(in.c) + csv_number(in.gamma));
  auto line = [&](const char* name, double v, const char* prov) {
    led << name << " = " << csv_number(v) << " ; " << prov << " ; " << inputs << "\n";
  };
  line("beta", k.beta, "formula");
  line("delta", k.delta, "formula");
  line("M", k.M, "measured");
  line("K", k.K, "measured");
  line("A_ball", k.A_ball, "measured");
  line("calA", k.calA, "formula");
  line("H", k.H, "formula");
  line("c", k.c, "measured");
  line("gamma", k.gamma, "measured");
  line("N0", k.N0, "formula");
  line("R0", k.R0, "formula");
  line("R1", k.R1, "measured");
  line("a", k.a, "measured");
  line("eta", k.eta, "formula");
  ctx.artifacts().write("constants.txt", led.str());
  return {k, cr};
}

inline void run_correlations(PipelineContext& ctx) {
  const auto& cfg = ctx.cfg();
  const OrbitWindow& w = ctx.window();
  const GibbsFamily& g = ctx.gibbs();
  const std::size_t lo = ctx.settled_first();
  const std::size_t horizon = std::min(cfg.stats.correlation_horizon, w.count() - 25 - (lo + 10));
  auto re = [](cplx z) { return std::clamp(z.real(), 0.0, 10.0); };
  std::vector<std::size_t> starts;
  for (std::size_t j = lo; j < lo + 10; ++j) starts.push_back(j);
  auto cr = correlation(w, g, starts, re, re, horizon);
  Csv cc({"n", "value", "fit_residual"});
  for (std::size_t n = 0; n < cr.n.size(); ++n) {
    const double fit = cr.fitted ? cr.fit.prefactor * std::pow(cr.fit.rate, double(n)) : 0.0;
    cc.row(cr.n[n], cr.value[n], cr.fitted ? std::log(cr.value[n] / fit) : 0.0);
  }
  ctx.artifacts().write("correlations.csv", cc.str());
  ctx.plot_sources().push_back("correlations.csv");
  ctx.check("correlations", "geometric_decay", cr.fitted && cr.fit.r2 >= 0.9 && cr.fit.rate < 1, cr.fit.rate);

  GridChain chain(w, g);
  auto hc = centered_on(w, g, lo, re);
  auto op = operator_correlations(w, g, lo, hc, re, 5);
  std::size_t ns[] = {1, 2, 5};
  auto mc = monte_carlo_correlation(w, chain, lo, hc, re, ns, cfg.stats.mc_trajectories, cfg.seed);
  Csv mcc({"n", "operator", "monte_carlo", "standard_error"});
  bool agree = true;
  double worst = 0;
  for (std::size_t q = 0; q < mc.n.size(); ++q) {
    mcc.row(mc.n[q], op[mc.n[q]], mc.mean[q], mc.standard_error[q]);
    const double z = std::abs(mc.mean[q] - op[mc.n[q]]) / mc.standard_error[q];
    worst = std::max(worst, z);
    agree = agree && z <= 3;
  }
  ctx.artifacts().write("correlations_monte_carlo.csv", mcc.str());
  ctx.check("correlations", "monte_carlo_agreement", agree, worst);
}

inline void run_clt(PipelineContext& ctx) {
  const auto& cfg = ctx.cfg();
  const std::size_t n = cfg.stats.clt_length;
  WindowSpec ws;
  ws.count = n + 60;
  ws.depth = cfg.geometry.depth;
  auto w = build_window(driving_system(cfg), base_point(cfg), family_config(cfg), ws,
                        julia_params(cfg, cfg.geometry.grid_resolution), cfg.potential);
  auto g = build_gibbs(w, {Reference::UniformInDisk, cfg.geometry.R0});
  GridChain chain(w, g);
  const std::size_t start = 30;
  std::vector<std::size_t> gk_starts;
  for (std::size_t j = start; j < start + n; j += 4) gk_starts.push_back(j);
  ConjugationOdd psi;
  auto rep = birkhoff_clt(w, g, chain, start, psi, n, cfg.stats.clt_samples, cfg.seed, gk_starts);
  auto iid = iid_fixture_clt(n, cfg.stats.clt_samples, cfg.seed);

  std::vector<double> sorted = rep.normalized_sums;
  std::sort(sorted.begin(), sorted.end());
  Csv q({"p", "sample", "normal"});
  const double sigma = std::sqrt(rep.sigma2);
  for (int i = 1; i < 100; ++i) {
    const double p = i / 100.0;
    const double s = sorted[std::min(sorted.size() - 1, std::size_t(p * double(sorted.size())))];
    // inverse normal CDF by bisection on erfc
    double lo = -10, hi = 10;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
    }
    q.row(p, s, sigma * 0.5 * (lo + hi));
  }
  ctx.artifacts().write("clt_quantiles.csv", q.str());
  ctx.plot_sources().push_back("clt_quantiles.csv");
  const double lo_edge = -4 * sigma, width = 8 * sigma / 40;
  std::vector<std::size_t> bins(40, 0);
  for (double v : rep.normalized_sums) {
    const long b = long(std::floor((v - lo_edge) / width));
    if (b >= 0 && b < 40) ++bins[std::size_t(b)];
  }
  Csv h({"bin_left", "bin_right", "count"});
  for (std::size_t b = 0; b < 40; ++b) h.row(lo_edge + double(b) * width, lo_edge + double(b + 1) * width, bins[b]);
  ctx.artifacts().write("clt_histogram.csv", h.str());
  Csv s({"quantity", "value"});
  s.row("n", rep.n).row("samples", rep.samples).row("sigma2", rep.sigma2).row("sigma2_doubled", rep.sigma2_doubled);
  s.row("k_max", rep.k_max).row("ks_statistic", rep.ks.statistic).row("ks_p_value", rep.ks.p_value);
  s.row("iid_ks_statistic", iid.ks.statistic).row("iid_ks_p_value", iid.ks.p_value);
  ctx.artifacts().write("clt_summary.csv", s.str());
  ctx.check("clt", "ks_normal", !rep.coboundary && rep.ks.p_value > 0.01, rep.ks.p_value);
  const double drift = std::abs(rep.sigma2_doubled - rep.sigma2) / rep.sigma2;
  ctx.check("clt", "sigma2_truncation_stable", drift <= 0.05, drift);
  ctx.check("clt", "iid_fixture", iid.pass, iid.ks.p_value);
}

inline RunResult run_pipeline(const ExperimentConfig& cfg, const std::string& pipeline, const std::string& out_dir) {
  bool known = false;
  for (const auto& p : pipeline_names()) known = known || p == pipeline;
  require(known, errc::config, "unknown pipeline '" + pipeline + "'");
  Artifacts art(out_dir);
  PipelineContext ctx(cfg, art);
  const bool all = pipeline == "all";
  if (all || pipeline == "check-conditions") run_check_conditions(ctx);
  if (all || pipeline == "julia") run_julia(ctx);
  if (all || pipeline == "nevanlinna") run_nevanlinna(ctx);
  if (all || pipeline == "gibbs") run_gibbs(ctx);
  if (all || pipeline == "cones") run_cones(ctx);
  if (all || pipeline == "correlations") run_correlations(ctx);
  if (all || pipeline == "clt") run_clt(ctx);
  emit_plot_data(art, ctx.plot_sources());

  RunResult res;
  res.checks = ctx.checks();
  Csv cc({"pipeline", "check", "pass", "value", "detail"});
  nlohmann::ordered_json failures = nlohmann::ordered_json::array();
  for (const Check& c : res.checks) {
    cc.row(c.pipeline, c.name, c.pass, c.value, c.detail);
    if (!c.pass)
      failures.push_back({{"pipeline", c.pipeline}, {"check", c.name}, {"value", csv_number(c.value)},
                          {"detail", c.detail}});
  }
  art.write("checks.csv", cc.str());
  art.write("failures.json", failures.dump(2) + "\n");
  res.manifest = art.write_manifest();
  return res;
}

}  // namespace rtd
