#include "cpsim/engine.hpp"

#include <array>
#include <cmath>
#include <string>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cpsim/errors.hpp"

namespace cpsim::engine {
namespace {

constexpr double kPi = std::numbers::pi;

void require_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ConfigError(fmt::format("engine parameter {} must be positive, got {}",
                                  name, value));
  }
}

bool valid_state(const EngineState& s) {
  return std::isfinite(s.p_m) && std::isfinite(s.omega_e) && s.p_m > 0.0 &&
         s.omega_e > 0.0;
}

EngineState advance(const EngineState& s, const StateDerivative& d, double h) {
  return {s.p_m + h * d.dp_m, s.omega_e + h * d.domega_e};
}

}  // namespace

void validate(const EngineParams& p) {
  require_positive(p.R, "R");
  require_positive(p.theta_a, "theta_a");
  require_positive(p.theta_m, "theta_m");
  require_positive(p.d_th, "d_th");
  require_positive(p.A_th_leak, "A_th_leak");
  require_positive(p.V_d, "V_d");
  require_positive(p.V_c, "V_c");
  require_positive(p.p_a, "p_a");
  require_positive(p.p_out, "p_out");
  require_positive(p.beta0, "beta0");
  require_positive(p.beta2, "beta2");
  require_positive(p.theta_e, "theta_e");
  require_positive(p.H_f, "H_f");
  require_positive(p.kappa, "kappa");
  require_positive(p.alpha, "alpha");
  if (!(p.alpha_th0 > 0.0 && p.alpha_th0 < kPi / 2.0)) {
    throw ConfigError(
        fmt::format("alpha_th0 must lie in (0, pi/2), got {}", p.alpha_th0));
  }
  if (!(p.V_c < p.V_d)) {
    throw ConfigError("compression volume must be smaller than displacement");
  }
  for (double c : {p.gamma0, p.gamma1, p.gamma2, p.eta0, p.eta1}) {
    if (!std::isfinite(c)) {
      throw ConfigError("efficiency coefficients must be finite");
    }
  }
}

double throttle_angle(double u_alpha, const EngineParams& params) {
  if (!(u_alpha >= 0.0 && u_alpha <= 1.0)) {
    throw DomainError(
        fmt::format("normalized throttle {} outside [0, 1]", u_alpha));
  }
  return params.alpha_th0 + (kPi / 2.0 - params.alpha_th0) * u_alpha;
}

double throttle_area(double alpha_th, const EngineParams& params,
                     ThrottleForm form) {
  if (!(alpha_th >= params.alpha_th0 && alpha_th <= kPi / 2.0)) {
    throw DomainError(fmt::format("throttle angle {} outside [{}, pi/2]",
                                  alpha_th, params.alpha_th0));
  }
  const double bore = kPi * params.d_th * params.d_th / 4.0;
  const double ratio = std::cos(alpha_th) / std::cos(params.alpha_th0);
  const double shape = form == ThrottleForm::kComplemented ? 1.0 - ratio : ratio;
  return bore * shape + params.A_th_leak;
}

double open_area(const ThrottleCommand& cmd, const EngineParams& params,
                 ThrottleForm form) {
  if (const auto* area = std::get_if<ThrottleArea>(&cmd)) {
    return area->value;
  }
  const double u = std::get<NormalizedThrottle>(cmd).value;
  return throttle_area(throttle_angle(u, params), params, form);
}

double intake_mass_flow(double area, double p_m, const EngineParams& params,
                        FlowMode mode) {
  if (!(area >= 0.0)) {
    throw DomainError(fmt::format("throttle area {} is negative", area));
  }
  if (!(p_m > 0.0)) {
    throw DomainError(fmt::format("manifold pressure {} is not positive", p_m));
  }
  const double scale = area * params.p_a / std::sqrt(params.R * params.theta_a);
  const double ratio = p_m / params.p_a;
  if (mode == FlowMode::kChokedOnly || ratio <= 0.5) {
    return scale / std::sqrt(2.0);
  }
  // At or above ambient pressure the throttle carries no forward flow.
  if (ratio >= 1.0) return 0.0;
  return scale * std::sqrt(2.0 * ratio * (1.0 - ratio));
}

double volumetric_efficiency(double omega_e, double p_m,
                             const EngineParams& params) {
  if (!(p_m > 0.0)) {
    throw DomainError(fmt::format("manifold pressure {} is not positive", p_m));
  }
  if (!(omega_e > 0.0)) {
    throw DomainError(fmt::format("engine speed {} is not positive", omega_e));
  }
  const double speed_factor =
      params.gamma0 + params.gamma1 * omega_e + params.gamma2 * omega_e * omega_e;
  const double pressure_factor =
      (params.V_c + params.V_d) / params.V_d -
      (params.V_c / params.V_d) *
          std::pow(params.p_out / p_m, 1.0 / params.kappa);
  const double eff = speed_factor * pressure_factor;
  if (eff < 0.0) {
    spdlog::debug("volumetric efficiency {} clamped to 0 (omega={}, p_m={})",
                  eff, omega_e, p_m);
    return 0.0;
  }
  return eff;
}

CylinderFlows cylinder_flows(double p_m, double omega_e,
                             const EngineParams& params) {
  const double eff = volumetric_efficiency(omega_e, p_m, params);
  CylinderFlows flows;
  flows.mixture = p_m / (params.R * params.theta_m) * eff * params.V_d *
                  omega_e / (4.0 * kPi);
  flows.air = flows.mixture * params.alpha / (params.alpha + 1.0);
  flows.fuel = flows.air / params.alpha;
  return flows;
}

double engine_torque(double p_m, double omega_e, const EngineParams& params) {
  if (omega_e == 0.0) {
    throw DomainError("engine torque is undefined at zero speed");
  }
  const CylinderFlows flows = cylinder_flows(p_m, omega_e, params);
  // Fuel mass burnt per cycle.
  const double fuel_per_cycle =
      flows.air * 4.0 * kPi / (params.alpha * omega_e);
  const double indicated_efficiency = params.eta0 + params.eta1 * omega_e;
  const double fuel_mep = params.H_f * fuel_per_cycle / params.V_d;
  const double losses = params.beta0 + params.beta2 * omega_e * omega_e +
                        (params.p_out - p_m);
  return (indicated_efficiency * fuel_mep - losses) * params.V_d / (4.0 * kPi);
}

StateDerivative derivatives(const EngineState& state,
                            const ThrottleCommand& input, double load_torque,
                            const EngineParams& params, const ModelModes& modes,
                            const Disturbance& disturbance) {
  const double area = open_area(input, params, modes.throttle_form);
  const double inflow =
      intake_mass_flow(area, state.p_m, params, modes.flow_mode);
  const CylinderFlows flows = cylinder_flows(state.p_m, state.omega_e, params);
  const double torque = engine_torque(state.p_m, state.omega_e, params);
  return {params.R * params.theta_m / params.V_d * (inflow - flows.air) +
              disturbance.dp_m,
          (torque - load_torque) / params.theta_e + disturbance.domega_e};
}

EngineState rk4_step(const EngineState& state, const ThrottleCommand& input,
                     double load_torque, double dt, const EngineParams& params,
                     const ModelModes& modes, const Disturbance& disturbance) {
  if (!(dt > 0.0)) {
    throw DomainError(fmt::format("integration step {} is not positive", dt));
  }
  auto stage = [&](const EngineState& at, int index) {
    if (!valid_state(at)) {
      throw IntegrationError(
          fmt::format("RK4 stage {} evaluated at invalid state p_m={} "
                      "omega_e={}",
                      index, at.p_m, at.omega_e),
          index);
    }
    const StateDerivative d =
        derivatives(at, input, load_torque, params, modes, disturbance);
    if (!std::isfinite(d.dp_m) || !std::isfinite(d.domega_e)) {
      throw IntegrationError(
          fmt::format("RK4 stage {} produced a non-finite derivative", index),
          index);
    }
    return d;
  };

  const StateDerivative k1 = stage(state, 1);
  const StateDerivative k2 = stage(advance(state, k1, dt / 2.0), 2);
  const StateDerivative k3 = stage(advance(state, k2, dt / 2.0), 3);
  const StateDerivative k4 = stage(advance(state, k3, dt), 4);

  const EngineState next{
      state.p_m + dt / 6.0 * (k1.dp_m + 2.0 * k2.dp_m + 2.0 * k3.dp_m + k4.dp_m),
      state.omega_e + dt / 6.0 * (k1.domega_e + 2.0 * k2.domega_e +
                                  2.0 * k3.domega_e + k4.domega_e)};
  if (!valid_state(next) || next.p_m > params.p_a) {
    throw IntegrationError(
        fmt::format("integration left the valid state region: p_m={} "
                    "omega_e={}",
                    next.p_m, next.omega_e),
        0);
  }
  return next;
}

double equilibrium_residual(const EngineState& state, double area,
                            double load_torque, const EngineParams& params,
                            const ModelModes& modes) {
  const StateDerivative d =
      derivatives(state, ThrottleArea{area}, load_torque, params, modes);
  return std::hypot(d.dp_m / params.p_a, d.domega_e / state.omega_e);
}

Equilibrium find_equilibrium(double omega_target, double load_torque,
                             const EngineParams& params,
                             const ModelModes& modes,
                             const EquilibriumOptions& options) {
  if (!(omega_target > 0.0)) {
    throw DomainError(fmt::format("target speed {} is not positive", omega_target));
  }
  if (!(load_torque >= 0.0)) {
    throw DomainError(fmt::format("load torque {} is negative", load_torque));
  }
  validate(params);

  // Unknowns are normalized: pressure by p_a, area by the full-open area.
  const double area_scale = params.max_throttle_area();
  using Vec = std::array<double, 2>;

  auto residual = [&](const Vec& y) -> Vec {
    const EngineState s{y[0] * params.p_a, omega_target};
    const StateDerivative d = derivatives(s, ThrottleArea{y[1] * area_scale},
                                          load_torque, params, modes);
    return {d.dp_m / params.p_a, d.domega_e / omega_target};
  };
  auto norm = [](const Vec& r) { return std::hypot(r[0], r[1]); };
  auto in_domain = [](const Vec& y) {
    return y[0] > 0.0 && y[0] < 1.0 && y[1] >= 0.0 && std::isfinite(y[0]) &&
           std::isfinite(y[1]);
  };

  // Start at half ambient pressure with the area that balances the flows.
  Vec y{0.5, 0.0};
  {
    const double air = cylinder_flows(y[0] * params.p_a, omega_target, params).air;
    const double unit_flow =
        intake_mass_flow(1.0, y[0] * params.p_a, params, modes.flow_mode);
    y[1] = air / unit_flow / area_scale;
  }
  Vec r = residual(y);
  double r_norm = norm(r);

  int iter = 0;
  for (; iter < options.max_iterations && !(r_norm < options.tolerance); ++iter) {
    // Central-difference Jacobian with relative steps.
    double jac[2][2];
    for (int j = 0; j < 2; ++j) {
      const double h = options.relative_step * std::max(std::abs(y[j]), 1e-9);
      Vec plus = y, minus = y;
      plus[j] += h;
      minus[j] -= h;
      const Vec rp = residual(plus);
      const Vec rm = residual(minus);
      jac[0][j] = (rp[0] - rm[0]) / (2.0 * h);
      jac[1][j] = (rp[1] - rm[1]) / (2.0 * h);
    }
    const double det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    if (!std::isfinite(det) || det == 0.0) {
      throw EquilibriumError("singular Jacobian in equilibrium solve", r_norm);
    }
    const Vec step{(jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
                   (-jac[1][0] * r[0] + jac[0][0] * r[1]) / det};

    // Halve the step while it leaves the domain or increases the residual.
    double damping = 1.0;
    bool accepted = false;
    for (int k = 0; k < 40; ++k, damping /= 2.0) {
      const Vec trial{y[0] - damping * step[0], y[1] - damping * step[1]};
      if (!in_domain(trial)) continue;
      const Vec r_trial = residual(trial);
      const double trial_norm = norm(r_trial);
      if (std::isfinite(trial_norm) && trial_norm < r_norm) {
        y = trial;
        r = r_trial;
        r_norm = trial_norm;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }

  if (!(r_norm < options.tolerance)) {
    throw EquilibriumError(
        fmt::format("equilibrium not found at omega={} rad/s, T_l={} N m "
                    "after {} iterations (residual {:.3e})",
                    omega_target, load_torque, iter, r_norm),
        r_norm);
  }

  Equilibrium eq;
  eq.p_m = y[0] * params.p_a;
  eq.area = y[1] * area_scale;
  eq.omega_e = omega_target;
  eq.residual = r_norm;
  eq.iterations = iter;
  if (eq.area < params.A_th_leak || eq.area > params.max_throttle_area()) {
    throw EquilibriumError(
        fmt::format("equilibrium area {} m^2 outside the throttle range",
                    eq.area),
        r_norm);
  }
  return eq;
}

}  // namespace cpsim::engine
