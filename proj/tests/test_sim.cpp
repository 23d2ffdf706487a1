#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "cpsim/config.hpp"
#include "cpsim/errors.hpp"
#include "cpsim/sim.hpp"

using namespace cpsim;
using namespace cpsim::sim;

namespace {

namespace fs = std::filesystem;

ScenarioConfig scenario(attacks::AttackKind kind, bool noise = true) {
  ScenarioConfig cfg;
  cfg.attack.kind = kind;
  cfg.noise.enabled = noise;
  return cfg;
}

const Trace& baseline() {
  static const Trace trace = run_scenario(scenario(attacks::AttackKind::kNone));
  return trace;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cpsim_test_sim";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("default load puts the equilibrium at 7.44e-5 m^2") {
  CHECK(baseline().h_bar == doctest::Approx(7.44e-5).epsilon(1e-9));
  CHECK(baseline().omega_bar_rpm == doctest::Approx(4200.0).epsilon(1e-12));
}

TEST_CASE("trace has one row per millisecond") {
  const Trace& t = baseline();
  REQUIRE(t.records.size() == 15000);
  CHECK(t.records.front().t == 0.0);
  CHECK(t.records.back().t == doctest::Approx(14.999).epsilon(1e-15));
  // ES and TR on every control tick, nothing in between.
  for (std::size_t k = 0; k < 100; ++k) {
    if (k % 10 == 0) {
      REQUIRE(t.records[k].frames.size() == 2);
      CHECK(t.records[k].frames[0].id == 0x10);
      CHECK(t.records[k].frames[1].id == 0x15);
    } else {
      CHECK(t.records[k].frames.empty());
    }
  }
  CHECK(t.frames_queued == 3000);
  CHECK(t.bus_log.size() == 3000);
}

TEST_CASE("same seed gives an identical trace") {
  const Trace again = run_scenario(scenario(attacks::AttackKind::kNone));
  CHECK(again.records == baseline().records);
}

TEST_CASE("different seeds differ") {
  ScenarioConfig cfg = scenario(attacks::AttackKind::kNone);
  cfg.noise.seed = 2;
  cfg.duration = 1.0;
  cfg.attack.t_start = 0.5;
  cfg.attack.duration = 0.1;
  const Trace other = run_scenario(cfg);
  CHECK(other.records[20].omega_rpm != baseline().records[20].omega_rpm);
}

TEST_CASE("attacks do not change anything before they start") {
  for (auto kind : {attacks::AttackKind::kFuzzing, attacks::AttackKind::kReplay,
                    attacks::AttackKind::kInjection}) {
    CAPTURE(attacks::to_string(kind));
    const Trace attacked = run_scenario(scenario(kind));
    for (std::size_t k = 0; k < 10000; ++k) {
      REQUIRE(attacked.records[k] == baseline().records[k]);
    }
    CHECK_FALSE(attacked.records[10001] == baseline().records[10001]);
  }
}

TEST_CASE("noise-free loop without attack stays at its set point") {
  const ScenarioConfig cfg = scenario(attacks::AttackKind::kNone, false);
  const Trace t = run_scenario(cfg);
  const Summary s = summarize(t, cfg.attack);
  CHECK(std::abs(s.peak_rpm - s.stationary_rpm) < 0.1);
  CHECK(std::abs(s.min_rpm - s.stationary_rpm) < 0.1);
  CHECK(std::abs(s.stationary_rpm - 4200.0) < 0.1);
  CHECK(t.throttle_clamps == 0);
}

TEST_CASE("injection keeps the legit request last on control ticks") {
  const Trace t = run_scenario(scenario(attacks::AttackKind::kInjection));
  for (std::size_t k = 10000; k < 10030; ++k) {
    const auto& frames = t.records[k].frames;
    if (!frames.empty()) {
      const auto last = frames.back();
      CHECK(last.id == 0x15);
    }
  }
  CHECK(t.learned_value == doctest::Approx(7.44e-5).epsilon(0.05));
}

TEST_CASE("summary") {
  const ScenarioConfig cfg = scenario(attacks::AttackKind::kNone);
  const Summary s = summarize(baseline(), cfg.attack);
  CHECK(s.attack_start == 10.0);
  CHECK(s.attack_end == 12.0);
  CHECK(s.min_rpm <= s.peak_rpm);

  double sum = 0.0;
  for (std::size_t k = 8000; k < 10000; ++k) sum += baseline().records[k].omega_rpm;
  CHECK(s.stationary_rpm == doctest::Approx(sum / 2000.0).epsilon(1e-14));

  const std::string json = to_json(s);
  CHECK(json.rfind("{\"stationary_rpm\":", 0) == 0);
  CHECK(json.find('\n') == std::string::npos);
  CHECK_THROWS_AS(summarize(Trace{}, cfg.attack), Error);
}

TEST_CASE("CSV export round-trips exactly") {
  const fs::path path = scratch("trace.csv");
  export_trace(baseline(), path);
  const Trace back = import_trace(path);
  REQUIRE(back.records.size() == baseline().records.size());
  CHECK(back.records == baseline().records);
  const attacks::AttackConfig window;
  CHECK(summarize(back, window) == summarize(baseline(), window));

  std::ostringstream os;
  write_trace_csv(os, baseline());
  CHECK(os.str().rfind("t_s,p_m_pa,omega_rpm,applied_area_m2,", 0) == 0);
  CHECK_THROWS_AS(import_trace(scratch("missing.csv")), IoError);
}

TEST_CASE("scenario validation") {
  ScenarioConfig cfg;
  cfg.duration = 11.0;
  cfg.attack.kind = attacks::AttackKind::kFuzzing;
  CHECK_THROWS_AS(run_scenario(cfg), ConfigError);
  cfg = ScenarioConfig{};
  cfg.control_period_ms = 0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = ScenarioConfig{};
  cfg.noise.R = 0.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = ScenarioConfig{};
  cfg.load_torque = 1e5;
  CHECK_THROWS_AS(run_scenario(cfg), ScenarioError);
}

TEST_CASE("config files") {
  SUBCASE("write then parse reproduces the configuration") {
    ScenarioConfig cfg;
    cfg.attack.kind = attacks::AttackKind::kReplay;
    cfg.attack.offset = 3.25e-7;
    cfg.noise.seed = 123456789012345ull;
    cfg.modes.flow_mode = engine::FlowMode::kTwoBranch;
    cfg.engine.theta_e = 0.25;
    std::stringstream ss;
    config::write(ss, cfg);
    const ScenarioConfig back = config::parse(ss);
    CHECK(back.attack.kind == attacks::AttackKind::kReplay);
    CHECK(back.attack.offset == cfg.attack.offset);
    CHECK(back.noise.seed == cfg.noise.seed);
    CHECK(back.modes.flow_mode == engine::FlowMode::kTwoBranch);
    CHECK(back.engine.theta_e == 0.25);
    CHECK(back.engine.alpha_th0 == doctest::Approx(cfg.engine.alpha_th0).epsilon(1e-15));
    CHECK(back.load_torque == cfg.load_torque);
  }
  SUBCASE("omitted keys keep defaults") {
    std::istringstream in("[attack]\nkind = fuzzing\n");
    const ScenarioConfig cfg = config::parse(in);
    CHECK(cfg.attack.kind == attacks::AttackKind::kFuzzing);
    CHECK(cfg.omega_target_rpm == 4200.0);
  }
  SUBCASE("unknown keys and bad values are rejected") {
    std::istringstream unknown("[attack]\nspeed = 3\n");
    CHECK_THROWS_AS(config::parse(unknown), ConfigError);
    std::istringstream bad("[noise]\nr = abc\n");
    CHECK_THROWS_AS(config::parse(bad), ConfigError);
    std::istringstream section("[plant]\nx = 1\n");
    CHECK_THROWS_AS(config::parse(section), ConfigError);
  }
  SUBCASE("shipped default matches the built-in defaults") {
    const ScenarioConfig cfg = config::load(fs::path(CPSIM_SOURCE_DIR) / "configs/default.ini");
    const ScenarioConfig def;
    CHECK(cfg.load_torque == def.load_torque);
    CHECK(cfg.noise.Q == def.noise.Q);
    CHECK(cfg.noise.R == def.noise.R);
    CHECK(cfg.attack.kind == attacks::AttackKind::kNone);
  }
  CHECK_THROWS_AS(config::load("/nonexistent/cpsim.ini"), Error);
}
