#include "cpsim/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>

#include <fmt/format.h>

#include "cpsim/canbus.hpp"
#include "cpsim/errors.hpp"
#include "cpsim/noise.hpp"

namespace cpsim::selfcheck {
namespace {

engine::EngineState integrate(engine::EngineState s, double area, double load,
                              const engine::EngineParams& params,
                              const engine::ModelModes& modes, double horizon,
                              double h) {
  const auto steps = static_cast<long>(std::llround(horizon / h));
  for (long i = 0; i < steps; ++i) {
    s = engine::rk4_step(s, engine::ThrottleArea{area}, load, h, params, modes);
  }
  return s;
}

control::Dynamics engine_dynamics(const sim::ScenarioConfig& cfg) {
  return [cfg](const control::Vec2& z, double h) {
    const auto d = engine::derivatives({z(0), z(1)}, engine::ThrottleArea{h},
                                       cfg.load_torque, cfg.engine, cfg.modes);
    return control::Vec2(d.dp_m, d.domega_e);
  };
}

CheckResult guarded(const std::string& name, const std::string& criterion,
                    const std::function<std::pair<bool, double>()>& body) {
  CheckResult r;
  r.name = name;
  r.criterion = criterion;
  try {
    const auto [ok, value] = body();
    r.passed = ok;
    r.value = value;
  } catch (const std::exception& e) {
    r.passed = false;
    r.value = std::nan("");
    r.detail = e.what();
  }
  return r;
}

}  // namespace

double measure_rk4_order(const engine::EngineState& start, double area,
                         double load_torque, const engine::EngineParams& params,
                         const engine::ModelModes& modes, double horizon,
                         double step) {
  const auto reference =
      integrate(start, area, load_torque, params, modes, horizon, step / 100.0);
  auto error = [&](double h) {
    const auto s = integrate(start, area, load_torque, params, modes, horizon, h);
    return std::max(std::abs(s.p_m - reference.p_m) / params.p_a,
                    std::abs(s.omega_e - reference.omega_e) / start.omega_e);
  };
  return std::log2(error(step) / error(step / 2.0));
}

double jacobian_step_halving(const control::Dynamics& dynamics,
                             const control::Vec2& z_bar, double h_bar) {
  control::LinearizationOptions coarse;
  control::LinearizationOptions fine;
  fine.relative_step = coarse.relative_step / 2.0;
  const auto a = control::linearize(dynamics, z_bar, h_bar, coarse);
  const auto b = control::linearize(dynamics, z_bar, h_bar, fine);
  double worst = 0.0;
  auto compare = [&](double x, double y) {
    const double scale = std::max(std::abs(x), std::abs(y));
    if (scale > 0.0) worst = std::max(worst, std::abs(x - y) / scale);
  };
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) compare(a.A(i, j), b.A(i, j));
    compare(a.B(i), b.B(i));
  }
  return worst;
}

std::size_t codec_roundtrip_failures(std::size_t count, std::uint64_t seed) {
  noise::GaussianSource rng(seed);
  std::size_t failures = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const bool speed = i % 2 == 0;
    const auto& spec = speed ? canbus::engine_speed_message()
                             : canbus::throttle_request_message();
    const double value = speed ? rng.uniform() * 10000.0 : rng.uniform();
    const auto bytes = canbus::encode_signal(value, spec);
    const double decoded = canbus::decode_signal(bytes, spec);
    const bool exact = decoded == static_cast<double>(static_cast<float>(value)) &&
                       canbus::encode_signal(decoded, spec) == bytes;
    if (!exact) ++failures;
  }
  return failures;
}

std::vector<CheckResult> run(const sim::ScenarioConfig& cfg) {
  std::vector<CheckResult> results;

  results.push_back(guarded(
      "equilibrium residual", "< 1e-9 at 300, 439.82, 500 rad/s and target", [&] {
        double worst = 0.0;
        for (double omega : {300.0, 439.82, 500.0,
                             engine::rpm_to_rad_per_s(cfg.omega_target_rpm)}) {
          const auto eq = engine::find_equilibrium(omega, cfg.load_torque,
                                                   cfg.engine, cfg.modes);
          worst = std::max(worst, engine::equilibrium_residual(
                                      {eq.p_m, eq.omega_e}, eq.area,
                                      cfg.load_torque, cfg.engine, cfg.modes));
        }
        return std::pair{worst < 1e-9, worst};
      }));

  std::optional<control::ControllerDesign> design;
  std::string design_error;
  try {
    control::DesignInputs in;
    in.params = cfg.engine;
    in.modes = cfg.modes;
    in.omega_target = engine::rpm_to_rad_per_s(cfg.omega_target_rpm);
    in.load_torque = cfg.load_torque;
    in.Ts = cfg.control_period_ms * 1e-3;
    in.Q = cfg.noise.Q;
    in.R = cfg.noise.R;
    in.weights = cfg.weights;
    design = control::design_controller(in);
  } catch (const std::exception& e) {
    design_error = e.what();
  }
  auto need_design = [&]() -> const control::ControllerDesign& {
    if (!design) throw Error("controller design failed: " + design_error);
    return *design;
  };

  results.push_back(guarded("riccati residual (regulator)", "< 1e-9", [&] {
    const auto& d = need_design();
    Eigen::MatrixXd U(1, 1);
    U << cfg.weights.U;
    const double r = control::riccati_residual(d.model.A_d, d.model.B_d,
                                               cfg.weights.W, U, d.gains.P_ctrl);
    return std::pair{r < 1e-9, r};
  }));
  results.push_back(guarded("riccati residual (estimator)", "< 1e-9", [&] {
    const auto& d = need_design();
    Eigen::MatrixXd R(1, 1);
    R << d.model.R_d;
    const double r =
        control::riccati_residual(d.model.A_d.transpose(), d.model.C.transpose(),
                                  d.model.Q_d, R, d.gains.P_est);
    return std::pair{r < 1e-9, r};
  }));
  results.push_back(guarded("spectral radius A_d + B_d L", "< 1", [&] {
    const auto& d = need_design();
    const double rho =
        control::spectral_radius(d.model.A_d + d.model.B_d * d.gains.L);
    return std::pair{rho < 1.0, rho};
  }));
  results.push_back(guarded("spectral radius (I - K C) A_d", "< 1", [&] {
    const auto& d = need_design();
    const double rho = control::spectral_radius(
        (control::Mat2::Identity() - d.gains.K * d.model.C) * d.model.A_d);
    return std::pair{rho < 1.0, rho};
  }));
  results.push_back(guarded("jacobian step halving", "< 1e-4 relative", [&] {
    const auto& d = need_design();
    const double diff =
        jacobian_step_halving(engine_dynamics(cfg), d.model.z_bar, d.model.h_bar);
    return std::pair{diff < 1e-4, diff};
  }));
  results.push_back(guarded("rk4 order", "in [3.5, 4.5]", [&] {
    const auto& d = need_design();
    const engine::EngineState start{d.model.z_bar(0) - 5000.0,
                                    d.model.z_bar(1) + 20.0};
    const double order = measure_rk4_order(start, d.model.h_bar, cfg.load_torque,
                                           cfg.engine, cfg.modes);
    return std::pair{order >= 3.5 && order <= 4.5, order};
  }));
  results.push_back(guarded("codec round trip", "exact on 10^4 values", [&] {
    const auto failures = codec_roundtrip_failures(10000, cfg.noise.seed);
    return std::pair{failures == 0, static_cast<double>(failures)};
  }));
  return results;
}

void print(std::ostream& os, const std::vector<CheckResult>& results,
           bool verbose) {
  for (const auto& r : results) {
    os << fmt::format("{} {}", r.passed ? "PASS" : "FAIL", r.name);
    if (verbose) os << fmt::format("  value={:.6e}  ({})", r.value, r.criterion);
    if (!r.detail.empty()) os << "  error: " << r.detail;
    os << "\n";
  }
}

}  // namespace cpsim::selfcheck
