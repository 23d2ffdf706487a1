#pragma once

// Numeric invariant suite behind `cpsim selfcheck`.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cpsim/sim.hpp"

namespace cpsim::selfcheck {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  std::string criterion;
  std::string detail;  // error message when the check threw
};

/// Convergence order of rk4_step measured as log2(e(h) / e(h/2)) for the
/// global error at the end of `horizon`, against a reference at h/100.
double measure_rk4_order(const engine::EngineState& start, double area,
                         double load_torque, const engine::EngineParams& params,
                         const engine::ModelModes& modes, double horizon = 0.1,
                         double step = 0.01);

/// Largest relative per-entry change of (A, B) when the finite-difference
/// step is halved.
double jacobian_step_halving(const control::Dynamics& dynamics,
                             const control::Vec2& z_bar, double h_bar);

/// Number of values (out of `count`) whose codec round trip is not exact.
std::size_t codec_roundtrip_failures(std::size_t count, std::uint64_t seed);

std::vector<CheckResult> run(const sim::ScenarioConfig& cfg);

/// Prints one PASS/FAIL line per check; verbose adds the measured values.
void print(std::ostream& os, const std::vector<CheckResult>& results,
           bool verbose);

}  // namespace cpsim::selfcheck
