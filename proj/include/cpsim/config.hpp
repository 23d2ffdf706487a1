#pragma once

// Scenario configuration files: INI-style sections of key = value pairs.
//
//   [scenario]   omega_target_rpm, load_torque, duration, bus_tick_ms,
//                control_period_ms
//   [engine]     R, theta_a, theta_m, alpha_th0_deg, d_th, A_th_leak, V_d, V_c,
//                p_a, p_out, gamma0..2, eta0, eta1, beta0, beta2, theta_e, H_f,
//                kappa, alpha
//   [model]      throttle_form = complemented|verbatim,
//                flow_mode = choked|two-branch
//   [controller] w_pressure, w_speed, u
//   [noise]      enabled, seed, q_pressure, q_speed, r
//   [attack]     kind, t_start, duration, offset, rate_multiplier,
//                record_window, target, fuzz_mode
//
// Every key is optional; omitted keys keep their defaults. Unknown sections or
// keys and malformed values are rejected with ConfigError.

#include <filesystem>
#include <iosfwd>
#include <string_view>

#include "cpsim/sim.hpp"

namespace cpsim::config {

sim::ScenarioConfig load(const std::filesystem::path& path);
sim::ScenarioConfig parse(std::istream& in);

void write(std::ostream& os, const sim::ScenarioConfig& cfg);
void save(const std::filesystem::path& path, const sim::ScenarioConfig& cfg);

engine::FlowMode parse_flow_mode(std::string_view text);
engine::ThrottleForm parse_throttle_form(std::string_view text);

}  // namespace cpsim::config
