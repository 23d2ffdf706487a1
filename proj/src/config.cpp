#include "cpsim/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "cpsim/errors.hpp"

namespace cpsim::config {
namespace {

namespace pt = boost::property_tree;

double to_double(const std::string& key, const std::string& text) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError(fmt::format("{}: expected a number, got '{}'", key, text));
  }
  return value;
}

long long to_integer(const std::string& key, const std::string& text) {
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError(fmt::format("{}: expected an integer, got '{}'", key, text));
  }
  return value;
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(fmt::format("{}: expected a boolean, got '{}'", key, text));
}

using Setter = std::function<void(sim::ScenarioConfig&, const std::string& key,
                                  const std::string& value)>;

Setter number(double sim::ScenarioConfig::*field) {
  return [field](sim::ScenarioConfig& c, const std::string& k, const std::string& v) {
    c.*field = to_double(k, v);
  };
}

Setter engine_number(double engine::EngineParams::*field) {
  return [field](sim::ScenarioConfig& c, const std::string& k, const std::string& v) {
    c.engine.*field = to_double(k, v);
  };
}

Setter attack_number(double attacks::AttackConfig::*field) {
  return [field](sim::ScenarioConfig& c, const std::string& k, const std::string& v) {
    c.attack.*field = to_double(k, v);
  };
}

const std::map<std::string, Setter>& setters() {
  using C = sim::ScenarioConfig;
  using E = engine::EngineParams;
  static const std::map<std::string, Setter> table = {
      {"scenario.omega_target_rpm", number(&C::omega_target_rpm)},
      {"scenario.load_torque", number(&C::load_torque)},
      {"scenario.duration", number(&C::duration)},
      {"scenario.bus_tick_ms",
       [](C& c, const std::string& k, const std::string& v) {
         c.bus_tick_ms = static_cast<int>(to_integer(k, v));
       }},
      {"scenario.control_period_ms",
       [](C& c, const std::string& k, const std::string& v) {
         c.control_period_ms = static_cast<int>(to_integer(k, v));
       }},

      {"engine.R", engine_number(&E::R)},
      {"engine.theta_a", engine_number(&E::theta_a)},
      {"engine.theta_m", engine_number(&E::theta_m)},
      {"engine.alpha_th0_deg",
       [](C& c, const std::string& k, const std::string& v) {
         c.engine.alpha_th0 = to_double(k, v) * std::numbers::pi / 180.0;
       }},
      {"engine.d_th", engine_number(&E::d_th)},
      {"engine.A_th_leak", engine_number(&E::A_th_leak)},
      {"engine.V_d", engine_number(&E::V_d)},
      {"engine.V_c", engine_number(&E::V_c)},
      {"engine.p_a", engine_number(&E::p_a)},
      {"engine.p_out", engine_number(&E::p_out)},
      {"engine.gamma0", engine_number(&E::gamma0)},
      {"engine.gamma1", engine_number(&E::gamma1)},
      {"engine.gamma2", engine_number(&E::gamma2)},
      {"engine.eta0", engine_number(&E::eta0)},
      {"engine.eta1", engine_number(&E::eta1)},
      {"engine.beta0", engine_number(&E::beta0)},
      {"engine.beta2", engine_number(&E::beta2)},
      {"engine.theta_e", engine_number(&E::theta_e)},
      {"engine.H_f", engine_number(&E::H_f)},
      {"engine.kappa", engine_number(&E::kappa)},
      {"engine.alpha", engine_number(&E::alpha)},

      {"model.throttle_form",
       [](C& c, const std::string&, const std::string& v) {
         c.modes.throttle_form = parse_throttle_form(v);
       }},
      {"model.flow_mode",
       [](C& c, const std::string&, const std::string& v) {
         c.modes.flow_mode = parse_flow_mode(v);
       }},

      {"controller.w_pressure",
       [](C& c, const std::string& k, const std::string& v) {
         c.weights.W(0, 0) = to_double(k, v);
       }},
      {"controller.w_speed",
       [](C& c, const std::string& k, const std::string& v) {
         c.weights.W(1, 1) = to_double(k, v);
       }},
      {"controller.u",
       [](C& c, const std::string& k, const std::string& v) {
         c.weights.U = to_double(k, v);
       }},

      {"noise.enabled",
       [](C& c, const std::string& k, const std::string& v) {
         c.noise.enabled = to_bool(k, v);
       }},
      {"noise.seed",
       [](C& c, const std::string& k, const std::string& v) {
         const long long seed = to_integer(k, v);
         if (seed < 0) throw ConfigError("noise.seed must be non-negative");
         c.noise.seed = static_cast<std::uint64_t>(seed);
       }},
      {"noise.q_pressure",
       [](C& c, const std::string& k, const std::string& v) {
         c.noise.Q(0, 0) = to_double(k, v);
       }},
      {"noise.q_speed",
       [](C& c, const std::string& k, const std::string& v) {
         c.noise.Q(1, 1) = to_double(k, v);
       }},
      {"noise.r",
       [](C& c, const std::string& k, const std::string& v) {
         c.noise.R = to_double(k, v);
       }},

      {"attack.kind",
       [](C& c, const std::string&, const std::string& v) {
         c.attack.kind = attacks::parse_attack_kind(v);
       }},
      {"attack.t_start", attack_number(&attacks::AttackConfig::t_start)},
      {"attack.duration", attack_number(&attacks::AttackConfig::duration)},
      {"attack.offset", attack_number(&attacks::AttackConfig::offset)},
      {"attack.record_window", attack_number(&attacks::AttackConfig::record_window)},
      {"attack.rate_multiplier",
       [](C& c, const std::string& k, const std::string& v) {
         c.attack.rate_multiplier = static_cast<int>(to_integer(k, v));
       }},
      {"attack.target",
       [](C& c, const std::string&, const std::string& v) {
         c.attack.target = attacks::parse_target(v);
       }},
      {"attack.fuzz_mode",
       [](C& c, const std::string&, const std::string& v) {
         c.attack.fuzz_mode = attacks::parse_fuzz_mode(v);
       }},
  };
  return table;
}

}  // namespace

engine::FlowMode parse_flow_mode(std::string_view text) {
  if (text == "choked" || text == "choked-only") return engine::FlowMode::kChokedOnly;
  if (text == "two-branch") return engine::FlowMode::kTwoBranch;
  throw ConfigError(fmt::format("unknown flow mode '{}'", text));
}

engine::ThrottleForm parse_throttle_form(std::string_view text) {
  if (text == "complemented") return engine::ThrottleForm::kComplemented;
  if (text == "verbatim") return engine::ThrottleForm::kVerbatim;
  throw ConfigError(fmt::format("unknown throttle form '{}'", text));
}

sim::ScenarioConfig parse(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
  }
  sim::ScenarioConfig cfg;
  const auto& table = setters();
  for (const auto& [section, entries] : tree) {
    if (entries.empty()) {
      throw ConfigError(fmt::format("key '{}' outside of a section", section));
    }
    for (const auto& [key, value] : entries) {
      const std::string full = section + "." + key;
      const auto it = table.find(full);
      if (it == table.end()) {
        throw ConfigError(fmt::format("unknown config key '{}'", full));
      }
      it->second(cfg, full, value.data());
    }
  }
  return cfg;
}

sim::ScenarioConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  return parse(in);
}

void write(std::ostream& os, const sim::ScenarioConfig& c) {
  const auto& e = c.engine;
  os << "[scenario]\n"
     << fmt::format("omega_target_rpm = {}\n", c.omega_target_rpm)
     << fmt::format("load_torque = {}\n", c.load_torque)
     << fmt::format("duration = {}\n", c.duration)
     << fmt::format("bus_tick_ms = {}\n", c.bus_tick_ms)
     << fmt::format("control_period_ms = {}\n\n", c.control_period_ms);
  os << "[engine]\n"
     << fmt::format("R = {}\ntheta_a = {}\ntheta_m = {}\n", e.R, e.theta_a, e.theta_m)
     << fmt::format("alpha_th0_deg = {}\n", e.alpha_th0 * 180.0 / std::numbers::pi)
     << fmt::format("d_th = {}\nA_th_leak = {}\nV_d = {}\nV_c = {}\n", e.d_th,
                    e.A_th_leak, e.V_d, e.V_c)
     << fmt::format("p_a = {}\np_out = {}\n", e.p_a, e.p_out)
     << fmt::format("gamma0 = {}\ngamma1 = {}\ngamma2 = {}\n", e.gamma0, e.gamma1,
                    e.gamma2)
     << fmt::format("eta0 = {}\neta1 = {}\nbeta0 = {}\nbeta2 = {}\n", e.eta0,
                    e.eta1, e.beta0, e.beta2)
     << fmt::format("theta_e = {}\nH_f = {}\nkappa = {}\nalpha = {}\n\n",
                    e.theta_e, e.H_f, e.kappa, e.alpha);
  os << "[model]\n"
     << "throttle_form = "
     << (c.modes.throttle_form == engine::ThrottleForm::kComplemented
             ? "complemented"
             : "verbatim")
     << "\nflow_mode = "
     << (c.modes.flow_mode == engine::FlowMode::kChokedOnly ? "choked" : "two-branch")
     << "\n\n";
  os << "[controller]\n"
     << fmt::format("w_pressure = {}\nw_speed = {}\nu = {}\n\n", c.weights.W(0, 0),
                    c.weights.W(1, 1), c.weights.U);
  os << "[noise]\n"
     << fmt::format("enabled = {}\nseed = {}\n", c.noise.enabled, c.noise.seed)
     << fmt::format("q_pressure = {}\nq_speed = {}\nr = {}\n\n", c.noise.Q(0, 0),
                    c.noise.Q(1, 1), c.noise.R);
  const auto& a = c.attack;
  os << "[attack]\n"
     << "kind = " << attacks::to_string(a.kind) << "\n"
     << fmt::format("t_start = {}\nduration = {}\noffset = {}\n", a.t_start,
                    a.duration, a.offset)
     << fmt::format("rate_multiplier = {}\nrecord_window = {}\n", a.rate_multiplier,
                    a.record_window)
     << "target = " << attacks::to_string(a.target) << "\n"
     << "fuzz_mode = " << attacks::to_string(a.fuzz_mode) << "\n";
}

void save(const std::filesystem::path& path, const sim::ScenarioConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write config '{}'", path.string()));
  write(out, cfg);
}

}  // namespace cpsim::config
