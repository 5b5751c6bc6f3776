#pragma once

#include <cmath>
#include <memory>

#include "rtd/gibbs.hpp"
#include "rtd/orbit.hpp"

namespace rtd::fixtures {

inline DrivingSystem golden_rotation() { return DrivingSystem::rotation((std::sqrt(5.0) - 1) / 2, 0.1, 0.3); }

inline PotentialConfig default_potential() { return PotentialConfig{}; }

// Small exp-family window, built once per process.
inline const OrbitWindow& small_window() {
  static const auto w = [] {
    JuliaParams jp;
    jp.h_dedup = 0.1;
    WindowSpec ws;
    ws.count = 40;
    ws.depth = 30;
    return std::make_unique<OrbitWindow>(
        build_window(golden_rotation(), BasePoint{0.3, 0, 0}, FamilyConfig{}, ws, jp, default_potential()));
  }();
  return *w;
}

inline const GibbsFamily& small_gibbs() {
  static const auto g = std::make_unique<GibbsFamily>(build_gibbs(small_window(), {}));
  return *g;
}

}  // namespace rtd::fixtures
