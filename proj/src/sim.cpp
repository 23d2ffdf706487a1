#include "cpsim/sim.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cpsim/errors.hpp"
#include "cpsim/noise.hpp"

namespace cpsim::sim {
namespace {

using canbus::Frame;
using canbus::Origin;
using canbus::Tick;

constexpr Tick kStationaryWindowMs = 2000;

const canbus::MessageSpec& es() { return canbus::engine_speed_message(); }
const canbus::MessageSpec& tr() { return canbus::throttle_request_message(); }

// Controller ECU: estimator state plus the most recent throttle request seen
// on its own bus segment.
struct ControllerNode {
  const control::GainSet* gains = nullptr;
  control::EstimatorState est;
  double observed_tr = 0.0;
  double observed_rpm = 0.0;
  double command_area = 0.0;
};

}  // namespace

void validate(const ScenarioConfig& cfg) {
  engine::validate(cfg.engine);
  attacks::validate(cfg.attack);
  if (!(cfg.omega_target_rpm > 0.0)) {
    throw ConfigError("target speed must be positive");
  }
  if (!(cfg.load_torque >= 0.0)) {
    throw ConfigError("load torque must be non-negative");
  }
  if (cfg.bus_tick_ms != 1) {
    throw ConfigError("the bus tick is fixed at 1 ms");
  }
  if (cfg.control_period_ms <= 0 || cfg.control_period_ms % cfg.bus_tick_ms != 0) {
    throw ConfigError("control period must be a positive multiple of the bus tick");
  }
  if (cfg.attack.kind != attacks::AttackKind::kNone &&
      !(cfg.duration > cfg.attack.t_start + cfg.attack.duration)) {
    throw ConfigError("scenario must outlast the attack window");
  }
  if (!(cfg.duration > 0.0)) {
    throw ConfigError("scenario duration must be positive");
  }
  if (!(cfg.noise.R > 0.0)) {
    throw ConfigError("measurement variance must be positive");
  }
  noise::require_psd(cfg.noise.Q);
}

Trace run_scenario(const ScenarioConfig& cfg) {
  validate(cfg);

  control::DesignInputs inputs;
  inputs.params = cfg.engine;
  inputs.modes = cfg.modes;
  inputs.omega_target = engine::rpm_to_rad_per_s(cfg.omega_target_rpm);
  inputs.load_torque = cfg.load_torque;
  inputs.Ts = cfg.control_period_ms * 1e-3;
  inputs.Q = cfg.noise.Q;
  inputs.R = cfg.noise.R;
  inputs.weights = cfg.weights;

  control::ControllerDesign design;
  try {
    design = control::design_controller(inputs);
  } catch (const Error& e) {
    throw ScenarioError(fmt::format("controller synthesis failed: {}", e.what()), 0);
  }
  const control::LinearModel& model = design.model;

  Trace trace;
  trace.h_bar = model.h_bar;
  trace.omega_bar_rpm = engine::rad_per_s_to_rpm(model.z_bar(1));

  const Tick total_ticks = std::llround(cfg.duration * 1000.0);
  const Tick period = cfg.control_period_ms;
  const double dt = cfg.bus_tick_ms * 1e-3;
  trace.records.reserve(static_cast<std::size_t>(total_ticks));

  engine::EngineState state{model.z_bar(0), model.z_bar(1)};
  attacks::Attacker attacker(cfg.attack);
  canbus::BusState bus;
  noise::GaussianSource rng(cfg.noise.seed);

  ControllerNode ctrl;
  ctrl.gains = &design.gains;
  ctrl.observed_tr = model.h_bar;
  ctrl.observed_rpm = trace.omega_bar_rpm;
  ctrl.command_area = model.h_bar;

  double applied_area = model.h_bar;
  control::Vec2 w = control::Vec2::Zero();
  double v = 0.0;

  Tick k = 0;
  try {
    for (; k < total_ticks; ++k) {
      TraceRecord rec;
      rec.t = static_cast<double>(k) / 1000.0;
      rec.p_m = state.p_m;
      rec.omega_rpm = engine::rad_per_s_to_rpm(state.omega_e);

      const bool control_tick = k % period == 0;
      bool es_received = false;

      // Dispatch one arbitration round to the engine, controller and attacker.
      auto dispatch = [&](const std::vector<Frame>& frames) {
        for (const Frame& f : frames) {
          rec.frames.push_back({f.id, f.origin});
          attacker.observe(k, f);
          if (f.id == es().id) {
            ctrl.observed_rpm = canbus::decode_signal(f.data(), es());
            es_received = true;
          } else if (f.id == tr().id) {
            const double value = canbus::decode_signal(f.data(), tr());
            applied_area = value;
            if (f.origin == Origin::kAttacker) ctrl.observed_tr = value;
          }
        }
      };

      // Attacker frames go out at the start of the tick, ahead of legit traffic.
      for (const Frame& f : attacker.inject(k)) bus.queue(f);

      if (control_tick) {
        if (cfg.noise.enabled) {
          v = rng.draw(model.R_d);
          w = rng.draw(model.Q_d);
        }
        const double measured_rpm = engine::rad_per_s_to_rpm(state.omega_e + v);
        bus.queue(attacker.tamper(k, canbus::make_signal_frame(measured_rpm, es())));
      }
      dispatch(bus.arbitrate());

      if (control_tick && es_received) {
        ctrl.est.u_prev = ctrl.observed_tr - model.h_bar;
        const double y_dev = control::from_absolute(ctrl.observed_rpm, model.z_bar);
        const control::ControllerOutput out =
            control::controller_step(ctrl.est, y_dev, model, *ctrl.gains);
        ctrl.est = out.est;
        const control::AbsoluteCommand cmd =
            control::to_absolute(out.u, model.h_bar, cfg.engine);
        if (cmd.clamped) ++trace.throttle_clamps;
        ctrl.command_area = cmd.area;

        const Frame request = canbus::make_signal_frame(cmd.area, tr());
        ctrl.observed_tr = canbus::decode_signal(request.data(), tr());
        bus.queue(attacker.tamper(k, request));
        dispatch(bus.arbitrate());
      }

      rec.applied_area = applied_area;
      rec.observed_rpm = ctrl.observed_rpm;
      rec.command_area = ctrl.command_area;
      rec.w_p = w(0);
      rec.w_omega = w(1);
      rec.v_omega = v;

      const engine::Disturbance disturbance{w(0) / model.Ts, w(1) / model.Ts};
      state = engine::rk4_step(state, engine::ThrottleArea{applied_area},
                               cfg.load_torque, dt, cfg.engine, cfg.modes,
                               disturbance);
      trace.records.push_back(std::move(rec));
      bus.advance();
    }
  } catch (const ScenarioError&) {
    throw;
  } catch (const Error& e) {
    throw ScenarioError(fmt::format("tick {}: {}", k, e.what()), k);
  }

  trace.bus_log = bus.log();
  trace.frames_queued = bus.queued_total();
  if (cfg.attack.kind != attacks::AttackKind::kNone) {
    trace.learned_value = attacker.learned_value();
  }
  return trace;
}

Summary summarize(const Trace& trace, const attacks::AttackConfig& window) {
  if (trace.records.empty()) {
    throw Error("cannot summarize an empty trace");
  }
  const Tick start = window.start_tick();
  const Tick end = window.end_tick();

  Summary s;
  s.attack_start = static_cast<double>(start) / 1000.0;
  s.attack_end = static_cast<double>(end) / 1000.0;
  s.peak_rpm = -std::numeric_limits<double>::infinity();
  s.min_rpm = std::numeric_limits<double>::infinity();

  double stationary_sum = 0.0, area_sum = 0.0;
  std::size_t stationary_n = 0, attack_n = 0;
  for (const TraceRecord& r : trace.records) {
    const Tick tick = std::llround(r.t * 1000.0);
    if (tick >= start - kStationaryWindowMs && tick < start) {
      stationary_sum += r.omega_rpm;
      ++stationary_n;
    } else if (tick >= start && tick < end) {
      s.peak_rpm = std::max(s.peak_rpm, r.omega_rpm);
      s.min_rpm = std::min(s.min_rpm, r.omega_rpm);
      area_sum += r.applied_area;
      ++attack_n;
    }
  }
  if (stationary_n == 0 || attack_n == 0) {
    throw Error("trace does not cover the stationary and attack windows");
  }
  s.stationary_rpm = stationary_sum / static_cast<double>(stationary_n);
  s.mean_applied_area = area_sum / static_cast<double>(attack_n);
  return s;
}

std::string to_json(const Summary& s) {
  const nlohmann::ordered_json j = {
      {"stationary_rpm", s.stationary_rpm},
      {"peak_rpm", s.peak_rpm},
      {"min_rpm", s.min_rpm},
      {"mean_applied_area", s.mean_applied_area},
      {"attack_start", s.attack_start},
      {"attack_end", s.attack_end},
  };
  return j.dump();
}

void write_trace_csv(std::ostream& os, const Trace& trace) {
  os << "t_s,p_m_pa,omega_rpm,applied_area_m2,observed_rpm,command_area_m2,"
        "w_p,w_omega,v_omega,frames\n";
  std::string line;
  for (const TraceRecord& r : trace.records) {
    line = fmt::format("{},{},{},{},{},{},{},{},{},", r.t, r.p_m, r.omega_rpm,
                       r.applied_area, r.observed_rpm, r.command_area, r.w_p,
                       r.w_omega, r.v_omega);
    for (std::size_t i = 0; i < r.frames.size(); ++i) {
      if (i) line += ';';
      line += fmt::format("0x{:x}:{}", r.frames[i].id,
                          r.frames[i].origin == Origin::kLegit ? 'L' : 'A');
    }
    line += '\n';
    os << line;
  }
}

void export_trace(const Trace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  write_trace_csv(out, trace);
  out.flush();
  if (!out) throw IoError(fmt::format("failed writing {}", path.string()));
}

namespace {

double parse_double(std::string_view field, std::size_t line) {
  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw IoError(fmt::format("line {}: bad number '{}'", line, field));
  }
  return value;
}

std::vector<FrameTag> parse_frames(std::string_view field, std::size_t line) {
  std::vector<FrameTag> tags;
  while (!field.empty()) {
    const auto sep = field.find(';');
    const std::string_view item = field.substr(0, sep);
    const auto colon = item.find(':');
    if (colon == std::string_view::npos || item.substr(0, 2) != "0x") {
      throw IoError(fmt::format("line {}: bad frame tag '{}'", line, item));
    }
    FrameTag tag;
    const auto digits = item.substr(2, colon - 2);
    std::from_chars(digits.data(), digits.data() + digits.size(), tag.id, 16);
    tag.origin = item.substr(colon + 1) == "A" ? Origin::kAttacker : Origin::kLegit;
    tags.push_back(tag);
    if (sep == std::string_view::npos) break;
    field.remove_prefix(sep + 1);
  }
  return tags;
}

}  // namespace

Trace import_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::string line;
  std::getline(in, line);  // header
  Trace trace;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (int i = 0; i < 9; ++i) {
      const auto comma = rest.find(',');
      if (comma == std::string_view::npos) {
        throw IoError(fmt::format("line {}: too few columns", line_no));
      }
      fields.push_back(rest.substr(0, comma));
      rest.remove_prefix(comma + 1);
    }
    TraceRecord r;
    r.t = parse_double(fields[0], line_no);
    r.p_m = parse_double(fields[1], line_no);
    r.omega_rpm = parse_double(fields[2], line_no);
    r.applied_area = parse_double(fields[3], line_no);
    r.observed_rpm = parse_double(fields[4], line_no);
    r.command_area = parse_double(fields[5], line_no);
    r.w_p = parse_double(fields[6], line_no);
    r.w_omega = parse_double(fields[7], line_no);
    r.v_omega = parse_double(fields[8], line_no);
    r.frames = parse_frames(rest, line_no);
    trace.records.push_back(std::move(r));
  }
  return trace;
}

}  // namespace cpsim::sim
