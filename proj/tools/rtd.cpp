// Experiment runner.
//   rtd run --config cfg.json --pipeline gibbs [--seed N] [--out DIR]
//   rtd validate --config cfg.json
// Exit codes: 0 all checks pass, 1 a check or pipeline failed, 2 config or usage error.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rtd/pipeline.hpp"

namespace {

int workers_from_env() {
  const char* v = std::getenv("RTD_WORKERS");
  if (!v) return 1;
  try {
    return std::max(1, std::stoi(v));
  } catch (...) {
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"random transcendental dynamics experiments"};
  app.require_subcommand(1);

  std::string config_path, pipeline, out_dir;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "run a named pipeline");
  run->add_option("--config", config_path, "JSON config")->required();
  run->add_option("--pipeline", pipeline, "pipeline name")->required();
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--out", out_dir, "output directory");

  auto* val = app.add_subcommand("validate", "check a config and exit");
  val->add_option("--config", config_path, "JSON config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  rtd::ExperimentConfig cfg;
  try {
    cfg = rtd::load_config(config_path);
  } catch (const rtd::error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  if (*val) {
    std::cout << "ok\n";
    return 0;
  }

  if (seed) cfg.seed = *seed;
  if (!out_dir.empty()) cfg.output = out_dir;
  bool known = false;
  for (const auto& p : rtd::pipeline_names()) known = known || p == pipeline;
  if (!known) {
    std::cerr << "unknown pipeline '" << pipeline << "'\n";
    return 2;
  }
  std::cerr << "workers: " << workers_from_env() << "\n";

  try {
    auto res = rtd::run_pipeline(cfg, pipeline, cfg.output);
    for (const auto& c : res.checks)
      std::cout << (c.pass ? "PASS " : "FAIL ") << c.pipeline << "/" << c.name << " " << rtd::csv_number(c.value)
                << "\n";
    return res.pass() ? 0 : 1;
  } catch (const rtd::error& e) {
    nlohmann::ordered_json fail = {{"pipeline", pipeline}, {"error", e.what()}};
    std::filesystem::create_directories(cfg.output);
    std::ofstream(std::filesystem::path(cfg.output) / "failures.json") << fail.dump(2) << "\n";
    std::cerr << "pipeline failed: " << e.what() << "\n";
    return e.code() == rtd::errc::config ? 2 : 1;
  }
}
