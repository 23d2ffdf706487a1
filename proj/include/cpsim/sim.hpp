#pragma once

// Closed-loop co-simulation: engine plant, speed sensor, CAN segment, LQG
// controller and attacker, stepped on a deterministic 1 ms schedule.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cpsim/attacks.hpp"
#include "cpsim/canbus.hpp"
#include "cpsim/control.hpp"
#include "cpsim/engine.hpp"

namespace cpsim::sim {

struct NoiseConfig {
  bool enabled = true;
  std::uint64_t seed = 1;
  // Continuous process-noise intensity on (p_m, omega_e) per second.
  control::Mat2 Q = (control::Mat2() << 2500.0, 0.0, 0.0, 0.0025).finished();
  double R = 0.04;  // speed measurement variance [(rad/s)^2]
};

/// Load torque [N m] that puts the 4200 rpm equilibrium at a 7.44e-5 m^2
/// throttle area with the default parameters (tools/derive_load_torque.py).
inline constexpr double kDefaultLoadTorque = 132.17121148860767;

struct ScenarioConfig {
  engine::EngineParams engine;
  engine::ModelModes modes;
  double omega_target_rpm = 4200.0;
  double load_torque = kDefaultLoadTorque;
  control::SynthesisWeights weights;
  NoiseConfig noise;
  attacks::AttackConfig attack;
  double duration = 15.0;  // [s]
  int bus_tick_ms = 1;
  int control_period_ms = 10;
};

/// Throws ConfigError on a violated invariant.
void validate(const ScenarioConfig& cfg);

struct FrameTag {
  std::uint32_t id = 0;
  canbus::Origin origin = canbus::Origin::kLegit;

  friend bool operator==(const FrameTag&, const FrameTag&) = default;
};

/// State at the start of a bus tick and what happened during it.
struct TraceRecord {
  double t = 0.0;              // [s]
  double p_m = 0.0;            // true manifold pressure [Pa]
  double omega_rpm = 0.0;      // true engine speed [rpm]
  double applied_area = 0.0;   // throttle area held over this tick [m^2]
  double observed_rpm = 0.0;   // latest engine speed decoded by the controller
  double command_area = 0.0;   // latest controller command [m^2]
  double w_p = 0.0;            // process-noise draw for the current period
  double w_omega = 0.0;
  double v_omega = 0.0;        // measurement-noise draw [rad/s]
  std::vector<FrameTag> frames;  // delivered this tick, in delivery order

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct Trace {
  std::vector<TraceRecord> records;
  std::vector<canbus::Delivery> bus_log;
  std::size_t frames_queued = 0;
  std::size_t throttle_clamps = 0;
  double h_bar = 0.0;             // equilibrium area [m^2]
  double omega_bar_rpm = 0.0;
  double learned_value = 0.0;     // attacker's learned TR value, 0 without attack
};

struct Summary {
  double stationary_rpm = 0.0;   // mean true speed over 2 s before t_start
  double peak_rpm = 0.0;         // max true speed in the attack window
  double min_rpm = 0.0;          // min true speed in the attack window
  double mean_applied_area = 0.0;  // mean applied area in the attack window
  double attack_start = 0.0;
  double attack_end = 0.0;

  friend bool operator==(const Summary&, const Summary&) = default;
};

/// Runs one scenario. Throws ScenarioError (with the failing tick) for
/// integration or attack failures and ConfigError for invalid input.
Trace run_scenario(const ScenarioConfig& cfg);

Summary summarize(const Trace& trace, const attacks::AttackConfig& window);

/// One-line JSON record.
std::string to_json(const Summary& summary);

void write_trace_csv(std::ostream& os, const Trace& trace);
void export_trace(const Trace& trace, const std::filesystem::path& path);
Trace import_trace(const std::filesystem::path& path);

}  // namespace cpsim::sim
