#pragma once

// Experiment configuration: JSON loading, defaults and validation.

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtd/common.hpp"
#include "rtd/driving.hpp"
#include "rtd/maps.hpp"
#include "rtd/orbit.hpp"
#include "rtd/transfer.hpp"

namespace rtd {

struct DrivingBlock {
  std::string kind = "rotation";  // rotation | shift
  double angle = 0.6180339887498949;
  double param_min = 0.1, param_max = 0.3;
  double origin = 0.3;
  std::vector<double> values;  // shift symbols
  std::uint64_t shift_seed = 0;
};

struct FamilyBlock {
  std::string name = "RandomExp";
  double kappa = 2.0;
  double fixed_param = 1.0;
  GrowthProfile growth;
};

struct GeometryBlock {
  double R_max = 30;
  double R0 = 10;
  std::size_t depth = 30;           // pullback levels past each window
  std::size_t window = 80;          // operators in the main window
  double grid_resolution = 0.1;     // cloud dedup scale
  double refined_resolution = 0.05; // for refinement comparisons
  double delta0 = 1.5;              // distortion pair scale
};

struct NevanlinnaBlock {
  double eta = 0.2;
  std::vector<cplx> targets{{1, 1}, {-1, 0.5}, {3, 0}, {0, -2}, {0.5, 0}};
  std::vector<double> radii{1, 2, 5, 10, 20};
};

struct StatsBlock {
  std::size_t clt_length = 2000;
  std::size_t clt_samples = 5000;
  std::size_t mc_trajectories = 100000;
  std::size_t correlation_horizon = 20;
};

struct ExperimentConfig {
  DrivingBlock driving;
  FamilyBlock family;
  PotentialConfig potential;
  GeometryBlock geometry;
  NevanlinnaBlock nevanlinna;
  StatsBlock stats;
  std::string pipeline = "all";
  std::uint64_t seed = 1;
  std::string output = "out";
};

inline const std::vector<std::string>& pipeline_names() {
  static const std::vector<std::string> names{"check-conditions", "julia",        "nevanlinna", "gibbs",
                                              "cones",            "correlations", "clt",        "all"};
  return names;
}

inline DrivingSystem driving_system(const ExperimentConfig& c) {
  if (c.driving.kind == "shift") return DrivingSystem::shift(c.driving.values, c.driving.shift_seed);
  return DrivingSystem::rotation(c.driving.angle, c.driving.param_min, c.driving.param_max);
}

inline BasePoint base_point(const ExperimentConfig& c) { return BasePoint{c.driving.origin, c.driving.shift_seed, 0}; }

inline FamilyConfig family_config(const ExperimentConfig& c) {
  FamilyConfig fc;
  if (c.family.name == "RandomExp") fc.family = Family::RandomExp;
  else if (c.family.name == "RandomTangent") fc.family = Family::RandomTangent;
  else if (c.family.name == "SquareFixture") fc.family = Family::SquareFixture;
  else if (c.family.name == "LinearFixture") fc.family = Family::LinearFixture;
  else throw error(errc::config, "unknown family '" + c.family.name + "'");
  fc.kappa = c.family.kappa;
  fc.fixed_param = c.family.fixed_param;
  return fc;
}

inline JuliaParams julia_params(const ExperimentConfig& c, double resolution) {
  JuliaParams jp;
  jp.R_max = c.geometry.R_max;
  jp.h_dedup = resolution;
  return jp;
}

namespace detail {

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::config, std::string("field '") + key + "': " + e.what());
  }
}

inline void check_keys(const nlohmann::json& j, const char* block, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw error(errc::config, std::string("'") + block + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw error(errc::config, std::string("unknown field '") + it.key() + "' in '" + block + "'");
  }
}

}  // namespace detail

// Cross-field constraints; throws errc::config.
inline void validate(const ExperimentConfig& c) {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw error(errc::config, msg);
  };
  need(c.driving.kind == "rotation" || c.driving.kind == "shift", "driving.kind must be rotation or shift");
  need(c.driving.param_min <= c.driving.param_max, "driving.param_min exceeds param_max");
  need(c.driving.origin >= 0 && c.driving.origin < 1, "driving.origin must lie in [0,1)");
  if (c.driving.kind == "shift") need(c.driving.values.size() >= 2, "driving.values needs at least two symbols");
  need(c.geometry.R_max > 0 && c.geometry.R0 > 0 && c.geometry.R0 < c.geometry.R_max, "need 0 < R0 < R_max");
  need(c.geometry.grid_resolution > 0 && c.geometry.refined_resolution > 0, "grid resolutions must be positive");
  need(c.geometry.depth >= 30, "geometry.depth must be at least 30");
  need(c.geometry.window >= 40, "geometry.window must be at least 40");
  need(c.geometry.delta0 > 0, "geometry.delta0 must be positive");
  need(c.potential.beta > 0 && c.potential.beta <= 1, "potential.beta must lie in (0,1]");
  need(c.potential.K_max >= 1, "potential.K_max must be positive");
  need(c.potential.eps_tail > 0, "potential.eps_tail must be positive");
  need(c.stats.clt_samples >= 500, "stats.clt_samples must be at least 500");
  need(c.stats.clt_length >= 10, "stats.clt_length must be at least 10");
  need(c.nevanlinna.radii.size() >= 1 && c.nevanlinna.targets.size() >= 1, "nevanlinna needs radii and targets");
  bool known = false;
  for (const auto& p : pipeline_names()) known = known || p == c.pipeline;
  need(known, "unknown pipeline '" + c.pipeline + "'");
  const FamilyConfig fc = family_config(c);
  // the potential constraints must hold on every fiber; the parameter box
  // endpoints bound the declared data
  for (double p : {c.driving.param_min, c.driving.param_max}) validate(c.potential, fiber_map(fc, p));
}

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::read;
  ExperimentConfig c;
  detail::check_keys(j, "config",
                     {"driving", "family", "potential", "geometry", "nevanlinna", "stats", "pipeline", "seed",
                      "output"});
  if (j.contains("driving")) {
    const auto& d = j["driving"];
    detail::check_keys(d, "driving", {"kind", "angle", "param_min", "param_max", "origin", "values", "shift_seed"});
    read(d, "kind", c.driving.kind);
    read(d, "angle", c.driving.angle);
    read(d, "param_min", c.driving.param_min);
    read(d, "param_max", c.driving.param_max);
    read(d, "origin", c.driving.origin);
    read(d, "values", c.driving.values);
    read(d, "shift_seed", c.driving.shift_seed);
  }
  if (j.contains("family")) {
    const auto& f = j["family"];
    detail::check_keys(f, "family", {"name", "kappa", "fixed_param", "growth"});
    read(f, "name", c.family.name);
    read(f, "kappa", c.family.kappa);
    read(f, "fixed_param", c.family.fixed_param);
    if (f.contains("growth")) {
      const auto& g = f["growth"];
      detail::check_keys(g, "family.growth", {"order", "coefficient", "omega_slope"});
      read(g, "order", c.family.growth.order);
      read(g, "coefficient", c.family.growth.coefficient);
      read(g, "omega_slope", c.family.growth.omega_slope);
    }
  }
  if (j.contains("potential")) {
    const auto& p = j["potential"];
    detail::check_keys(p, "potential", {"t", "tau", "beta", "K_max", "eps_tail"});
    read(p, "t", c.potential.t);
    read(p, "tau", c.potential.tau);
    read(p, "beta", c.potential.beta);
    read(p, "K_max", c.potential.K_max);
    read(p, "eps_tail", c.potential.eps_tail);
  }
  if (j.contains("geometry")) {
    const auto& g = j["geometry"];
    detail::check_keys(g, "geometry",
                       {"R_max", "R0", "depth", "window", "grid_resolution", "refined_resolution", "delta0"});
    read(g, "R_max", c.geometry.R_max);
    read(g, "R0", c.geometry.R0);
    read(g, "depth", c.geometry.depth);
    read(g, "window", c.geometry.window);
    read(g, "grid_resolution", c.geometry.grid_resolution);
    read(g, "refined_resolution", c.geometry.refined_resolution);
    read(g, "delta0", c.geometry.delta0);
  }
  if (j.contains("nevanlinna")) {
    const auto& n = j["nevanlinna"];
    detail::check_keys(n, "nevanlinna", {"eta", "targets", "radii"});
    read(n, "eta", c.nevanlinna.eta);
    read(n, "radii", c.nevanlinna.radii);
    if (n.contains("targets")) {
      std::vector<std::array<double, 2>> t;
      read(n, "targets", t);
      c.nevanlinna.targets.clear();
      for (auto [re, im] : t) c.nevanlinna.targets.emplace_back(re, im);
    }
  }
  if (j.contains("stats")) {
    const auto& s = j["stats"];
    detail::check_keys(s, "stats", {"clt_length", "clt_samples", "mc_trajectories", "correlation_horizon"});
    read(s, "clt_length", c.stats.clt_length);
    read(s, "clt_samples", c.stats.clt_samples);
    read(s, "mc_trajectories", c.stats.mc_trajectories);
    read(s, "correlation_horizon", c.stats.correlation_horizon);
  }
  read(j, "pipeline", c.pipeline);
  read(j, "seed", c.seed);
  read(j, "output", c.output);
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw error(errc::config, "cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::config, std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace rtd
