// Acceptance gate: drives the CLI, reads checks.csv and prints one line per
// criterion. Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include "rtd/pipeline.hpp"

namespace fs = std::filesystem;

namespace tol {
constexpr double fmt_margin = -1e-3;
constexpr double tail_closed_form = 1e-8;
constexpr double tail_dual = 1e-8;
constexpr double envelope_rel = 0.15;
constexpr double conformality = 5e-3;
constexpr double lambda_refinement = 0.05;
constexpr double reference_bl = 2e-3;
constexpr double two_norm_rel = 0.20;
constexpr double rate_agreement = 0.15;
constexpr double mc_z = 3.0;
constexpr double ks_alpha = 0.01;
constexpr double sigma2_drift = 0.05;
constexpr double hausdorff = 0.01;
constexpr double linear_gamma_rel = 0.05;
constexpr double beta = 0.5;
constexpr double envelope_exponent = 1.5;  // (α₂ − τ) t for the default potential
constexpr double nevanlinna_seconds = 60;
constexpr double gibbs_seconds = 300;
constexpr double clt_seconds = 600;
}  // namespace tol

namespace {

struct Run {
  int code = -1;
  double seconds = 0;
  fs::path out;
  std::map<std::string, rtd::Check> checks;

  const rtd::Check& at(const std::string& key) const {
    auto it = checks.find(key);
    if (it == checks.end()) throw std::runtime_error("missing check " + key);
    return it->second;
  }
  double value(const std::string& key) const { return at(key).value; }
  bool pass(const std::string& key) const { return at(key).pass; }
};

Run run_cli(const std::string& pipeline, const fs::path& out) {
  Run r;
  r.out = out;
  fs::remove_all(out);
  const fs::path cfg = fs::path(RTD_SOURCE_DIR) / "config" / "default.json";
  const std::string cmd = std::string(RTD_CLI) + " run --config " + cfg.string() + " --pipeline " + pipeline +
                          " --out " + out.string() + " > " + (out.string() + ".log") + " 2>&1";
  const auto t0 = std::chrono::steady_clock::now();
  const int rc = std::system(cmd.c_str());
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  if (fs::exists(out / "checks.csv")) {
    auto rows = rtd::parse_csv(rtd::read_file(out / "checks.csv"));
    for (std::size_t i = 1; i < rows.size(); ++i)
      r.checks[rows[i][0] + "/" + rows[i][1]] = {rows[i][0], rows[i][1], rows[i][2] == "true", std::stod(rows[i][3]),
                                                 rows[i].size() > 4 ? rows[i][4] : ""};
  }
  std::printf("  [%s] exit %d in %.1f s\n", pipeline.c_str(), r.code, r.seconds);
  std::fflush(stdout);
  return r;
}

int failures = 0;

void report(int id, const std::string& what, const std::function<std::pair<bool, std::string>()>& eval) {
  bool ok = false;
  std::string detail;
  try {
    std::tie(ok, detail) = eval();
  } catch (const std::exception& e) {
    detail = std::string("error: ") + e.what();
  }
  if (!ok) ++failures;
  std::printf("%s criterion %2d  %-28s %s\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

int main() {
  const fs::path root = fs::current_path() / "acceptance_out";
  fs::create_directories(root);

  std::printf("running pipelines under %s\n", root.c_str());
  const Run nev = run_cli("nevanlinna", root / "nevanlinna");
  const Run gib = run_cli("gibbs", root / "gibbs");
  const Run clt = run_cli("clt", root / "clt");
  const Run all = run_cli("all", root / "all_1");
  const Run again = run_cli("all", root / "all_2");

  report(1, "first main theorem", [&] {
    const double m = nev.value("nevanlinna/fmt_margin");
    return std::pair{m >= tol::fmt_margin && nev.seconds < tol::nevanlinna_seconds,
                     "min margin " + num(m) + ", " + num(nev.seconds) + " s"};
  });

  report(2, "tail sum", [&] {
    const double z = all.value("nevanlinna/tail_sum_closed_form");
    const double d = all.value("nevanlinna/tail_sum_dual_agreement");
    return std::pair{std::abs(z - 1.0 / 12.0) <= tol::tail_closed_form && d <= tol::tail_dual,
                     "closed form error " + num(std::abs(z - 1.0 / 12.0)) + ", dual " + num(d)};
  });

  report(3, "operator decay envelope", [&] {
    const double e = all.value("gibbs/operator_decay_envelope");
    const bool ok = std::abs(e - tol::envelope_exponent) <= tol::envelope_rel * tol::envelope_exponent;
    return std::pair{ok && gib.seconds < tol::gibbs_seconds,
                     "exponent " + num(e) + " vs " + num(tol::envelope_exponent) + ", " + num(gib.seconds) + " s"};
  });

  report(4, "conformality", [&] {
    const double r = all.value("gibbs/conformality_residual");
    const double q = all.value("gibbs/lambda_ratio_refinement");
    return std::pair{r <= tol::conformality && std::isfinite(q) && q <= tol::lambda_refinement,
                     "residual " + num(r) + ", lambda ratio drift " + num(q)};
  });

  report(5, "tightness", [&] {
    const auto& c = all.at("gibbs/tightness");
    return std::pair{c.pass && c.value > 0, "eps fit " + num(c.value) + ", " + c.detail};
  });

  report(6, "invariant density", [&] {
    const auto& c = all.at("gibbs/density_geometric");
    const double bl = all.value("gibbs/reference_independence");
    return std::pair{c.pass && c.value < 1 && bl <= tol::reference_bl,
                     "rate " + num(c.value) + ", reference BL " + num(bl)};
  });

  report(7, "uniform bound", [&] {
    const auto& c = all.at("gibbs/uniform_bound_no_trend");
    return std::pair{c.pass, "slope " + num(c.value)};
  });

  report(8, "distortion and two-norm", [&] {
    const auto& k = all.at("cones/distortion_stable");
    const double margin = all.value("cones/two_norm_margin");
    const double decay = all.value("cones/two_norm_decay");
    const double predicted = tol::beta * std::log(all.value("julia/expansion_gamma_above_one"));
    const bool decay_ok = std::abs(decay - predicted) <= tol::two_norm_rel * predicted;
    return std::pair{k.pass && margin >= 0 && decay_ok, "K fit " + num(k.value) + (k.pass ? "" : " (unstable)") +
                                                            ", margin " + num(margin) + ", decay " + num(decay) +
                                                            " vs " + num(predicted)};
  });

  report(9, "cone machinery", [&] {
    const double inv = all.value("cones/cone_invariance");
    const bool bowen = all.pass("cones/bowen_step");
    const auto& con = all.at("cones/contraction");
    const double density_rate = all.value("gibbs/density_geometric");
    const bool agree = std::abs(con.value - density_rate) <= tol::rate_agreement;
    const bool control = all.pass("cones/isometry_control_fails_contraction");
    return std::pair{inv == 1.0 && bowen && con.pass && agree && control,
                     "invariance " + num(inv) + ", bowen " + (bowen ? "ok" : "fail") + ", rate " + num(con.value) +
                         " vs " + num(density_rate) + ", control " + (control ? "ok" : "fail")};
  });

  report(10, "correlations", [&] {
    const auto& g = all.at("correlations/geometric_decay");
    const double z = all.value("correlations/monte_carlo_agreement");
    return std::pair{g.pass && z <= tol::mc_z, "rate " + num(g.value) + ", worst z " + num(z)};
  });

  report(11, "central limit theorem", [&] {
    const double p = all.value("clt/ks_normal");
    const double drift = all.value("clt/sigma2_truncation_stable");
    const double iid = all.value("clt/iid_fixture");
    return std::pair{p > tol::ks_alpha && drift <= tol::sigma2_drift && iid > tol::ks_alpha &&
                         clt.seconds < tol::clt_seconds,
                     "p " + num(p) + ", sigma2 drift " + num(drift) + ", iid p " + num(iid) + ", " + num(clt.seconds) +
                         " s"};
  });

  report(12, "julia fixtures", [&] {
    const double hd = all.value("julia/square_fixture_hausdorff");
    const double g = all.value("julia/linear_fixture_gamma");
    return std::pair{hd <= tol::hausdorff && std::abs(g - 2) <= tol::linear_gamma_rel * 2,
                     "hausdorff " + num(hd) + ", gamma " + num(g)};
  });

  report(13, "determinism", [&] {
    const std::string a = rtd::read_file(all.out / "manifest.csv");
    const std::string b = rtd::read_file(again.out / "manifest.csv");
    return std::pair{!a.empty() && a == b && all.code == again.code,
                     a == b ? "manifests identical (" + rtd::sha256_hex(a).substr(0, 16) + ")" : "manifests differ"};
  });

  std::printf("%d of 13 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
