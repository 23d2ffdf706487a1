#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <ostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cpsim/config.hpp"
#include "cpsim/errors.hpp"
#include "cpsim/selfcheck.hpp"
#include "cpsim/sim.hpp"

namespace cpsim::cli {
namespace {

namespace fs = std::filesystem;

struct Overrides {
  std::optional<std::string> attack;
  std::optional<std::uint64_t> seed;
  std::optional<double> offset;
  std::optional<double> t_start;
  std::optional<double> duration;
  std::optional<int> rate;
  std::optional<std::string> fuzz_mode;
  std::optional<std::string> mode_flow;
  std::optional<std::string> mode_throttle;
  bool no_noise = false;
};

void add_override_flags(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--attack", o.attack, "none | fuzzing | replay | injection");
  cmd.add_option("--seed", o.seed, "noise seed");
  cmd.add_option("--offset", o.offset, "attack offset in target signal units");
  cmd.add_option("--t-start", o.t_start, "attack start [s]");
  cmd.add_option("--duration", o.duration, "attack duration [s]");
  cmd.add_option("--rate", o.rate, "injection rate multiplier");
  cmd.add_option("--fuzz-mode", o.fuzz_mode, "additive | fixed");
  cmd.add_option("--mode-flow", o.mode_flow, "choked | two-branch");
  cmd.add_option("--mode-throttle", o.mode_throttle, "complemented | verbatim");
  cmd.add_flag("--no-noise", o.no_noise, "disable process and measurement noise");
}

void apply(const Overrides& o, sim::ScenarioConfig& cfg) {
  if (o.attack) cfg.attack.kind = attacks::parse_attack_kind(*o.attack);
  if (o.seed) cfg.noise.seed = *o.seed;
  if (o.offset) cfg.attack.offset = *o.offset;
  if (o.t_start) cfg.attack.t_start = *o.t_start;
  if (o.duration) cfg.attack.duration = *o.duration;
  if (o.rate) cfg.attack.rate_multiplier = *o.rate;
  if (o.fuzz_mode) cfg.attack.fuzz_mode = attacks::parse_fuzz_mode(*o.fuzz_mode);
  if (o.mode_flow) cfg.modes.flow_mode = config::parse_flow_mode(*o.mode_flow);
  if (o.mode_throttle) {
    cfg.modes.throttle_form = config::parse_throttle_form(*o.mode_throttle);
  }
  if (o.no_noise) cfg.noise.enabled = false;
}

sim::ScenarioConfig load_config(const std::string& path) {
  if (path.empty()) throw ConfigError("--config is required");
  if (!fs::exists(path)) {
    throw ConfigError(fmt::format("config file '{}' does not exist", path));
  }
  return config::load(path);
}

fs::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return ".";
}

// Runs one scenario and writes config snapshot, trace, frame log and summary.
sim::Summary run_into(const sim::ScenarioConfig& cfg, const fs::path& dir,
                      bool snapshot) {
  fs::create_directories(dir);
  const sim::Trace trace = sim::run_scenario(cfg);
  const sim::Summary summary = sim::summarize(trace, cfg.attack);
  if (snapshot) config::save(dir / "config.ini", cfg);
  sim::export_trace(trace, dir / "trace.csv");
  {
    std::ofstream frames(dir / "frames.csv");
    if (!frames) throw IoError("cannot write frames.csv in " + dir.string());
    canbus::write_frame_log(frames, trace.bus_log);
  }
  std::ofstream(dir / "summary.json") << sim::to_json(summary) << "\n";
  return summary;
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    const auto end = text.find(',', begin);
    std::string item = text.substr(begin, end == std::string::npos ? end : end - begin);
    if (!item.empty()) parts.push_back(item);
    if (end == std::string::npos) break;
    begin = end + 1;
  }
  return parts;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Engine / LQG / CAN co-simulator for attack experiments", "cpsim"};
  app.require_subcommand(1);

  std::string config_path, out_flag;
  Overrides overrides;

  auto* run_cmd = app.add_subcommand("run", "run one scenario");
  run_cmd->add_option("--config", config_path, "scenario config file");
  run_cmd->add_option("--out", out_flag, "output directory");
  add_override_flags(*run_cmd, overrides);

  std::string attacks_list = "none,fuzzing,replay,injection";
  std::string seeds_list;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  auto* batch_cmd = app.add_subcommand("batch", "run scenarios in parallel");
  batch_cmd->add_option("--config", config_path, "base scenario config file");
  batch_cmd->add_option("--out", out_flag, "output directory");
  batch_cmd->add_option("--attacks", attacks_list, "comma-separated attack kinds");
  batch_cmd->add_option("--seeds", seeds_list, "comma-separated noise seeds");
  batch_cmd->add_option("--jobs", jobs, "parallel instances")
      ->check(CLI::PositiveNumber);
  add_override_flags(*batch_cmd, overrides);

  auto* synth_cmd = app.add_subcommand("synth-report", "print the LQG design");
  synth_cmd->add_option("--config", config_path, "scenario config file");
  add_override_flags(*synth_cmd, overrides);

  bool verbose = false;
  auto* check_cmd = app.add_subcommand("selfcheck", "run the numeric invariant suite");
  check_cmd->add_option("--config", config_path, "scenario config file");
  check_cmd->add_flag("-v,--verbose", verbose, "print measured values");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }

  sim::ScenarioConfig cfg;
  try {
    if (*run_cmd || *batch_cmd) {
      cfg = load_config(config_path);
    } else if (!config_path.empty()) {
      cfg = load_config(config_path);
    }
    apply(overrides, cfg);
    if (!*check_cmd) sim::validate(cfg);
  } catch (const Error& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (*run_cmd) {
      const sim::Summary summary = run_into(cfg, output_dir(out_flag), false);
      out << sim::to_json(summary) << "\n";
      return kOk;
    }

    if (*batch_cmd) {
      std::vector<std::uint64_t> seeds;
      for (const auto& s : split(seeds_list)) {
        try {
          seeds.push_back(std::stoull(s));
        } catch (const std::exception&) {
          err << "config error: bad seed '" << s << "'\n";
          return kConfigError;
        }
      }
      if (seeds.empty()) seeds.push_back(cfg.noise.seed);

      struct Instance {
        std::string name;
        sim::ScenarioConfig cfg;
      };
      std::vector<Instance> instances;
      try {
        for (const auto& kind : split(attacks_list)) {
          for (auto seed : seeds) {
            Instance inst{fmt::format("{}_seed{}", kind, seed), cfg};
            inst.cfg.attack.kind = attacks::parse_attack_kind(kind);
            inst.cfg.noise.seed = seed;
            sim::validate(inst.cfg);
            instances.push_back(std::move(inst));
          }
        }
      } catch (const Error& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
      }

      const fs::path root = output_dir(out_flag);
      int status = kOk;
      for (std::size_t begin = 0; begin < instances.size(); begin += jobs) {
        const std::size_t end = std::min(instances.size(), begin + jobs);
        std::vector<std::future<sim::Summary>> running;
        for (std::size_t i = begin; i < end; ++i) {
          running.push_back(std::async(std::launch::async, [&, i] {
            return run_into(instances[i].cfg, root / instances[i].name, true);
          }));
        }
        for (std::size_t i = begin; i < end; ++i) {
          try {
            const sim::Summary s = running[i - begin].get();
            out << instances[i].name << " " << sim::to_json(s) << "\n";
          } catch (const std::exception& e) {
            err << instances[i].name << ": simulation error: " << e.what() << "\n";
            status = kSimulationError;
          }
        }
      }
      return status;
    }

    if (*synth_cmd) {
      control::DesignInputs in;
      in.params = cfg.engine;
      in.modes = cfg.modes;
      in.omega_target = engine::rpm_to_rad_per_s(cfg.omega_target_rpm);
      in.load_torque = cfg.load_torque;
      in.Ts = cfg.control_period_ms * 1e-3;
      in.Q = cfg.noise.Q;
      in.R = cfg.noise.R;
      in.weights = cfg.weights;
      control::write_report(out, control::design_controller(in));
      return kOk;
    }

    if (*check_cmd) {
      const auto results = selfcheck::run(cfg);
      selfcheck::print(out, results, verbose);
      const bool ok = std::all_of(results.begin(), results.end(),
                                  [](const auto& r) { return r.passed; });
      return ok ? kOk : kCheckFailed;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "simulation error: " << e.what() << "\n";
    return kSimulationError;
  }
  return kOk;
}

}  // namespace cpsim::cli
