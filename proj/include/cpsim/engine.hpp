#pragma once

// Mean-value model of a spark-ignited engine: throttle body, intake
// manifold, gas exchange, torque generation and crankshaft inertia.
//
// State is (manifold pressure [Pa], engine speed [rad/s]). The closed loop
// drives the model with the throttle open area directly; the normalized
// throttle path (angle -> area) is kept for completeness.

#include <numbers>
#include <variant>

namespace cpsim::engine {

struct EngineParams {
  double R = 287.0;             // gas constant [J/(kg K)]
  double theta_a = 298.0;       // ambient temperature [K]
  double theta_m = 340.0;       // manifold temperature [K]
  double alpha_th0 = 7.9 * std::numbers::pi / 180.0;  // resting throttle angle [rad]
  double d_th = 58.7e-3;        // throttle diameter [m]
  double A_th_leak = 5.6e-6;    // leakage area [m^2]
  double V_d = 2.77e-3;         // displacement volume [m^3]
  double V_c = 0.277e-3;        // compression volume [m^3]
  double p_a = 1e5;             // ambient pressure [Pa]
  double p_out = 1e5;           // exhaust pressure [Pa]
  double gamma0 = 0.45;         // volumetric efficiency speed polynomial
  double gamma1 = 3.42e-3;      // [s]
  double gamma2 = -7.7e-6;      // [s^2]
  double eta0 = 0.16;           // Willians coefficients
  double eta1 = 2.21e-3;        // [s]
  double beta0 = 15.6;          // friction/gas-exchange loss coefficients
  double beta2 = 0.175e-3;
  double theta_e = 0.2;         // engine inertia [kg m^2]
  double H_f = 45.8e6;          // fuel specific energy [J/kg]
  double kappa = 1.35;          // specific-heat ratio
  double alpha = 14.70;         // air/fuel ratio times stoichiometric constant

  /// Fully open throttle area [m^2].
  double max_throttle_area() const noexcept {
    return std::numbers::pi * d_th * d_th / 4.0 + A_th_leak;
  }
};

/// Throws ConfigError naming the first violated parameter invariant.
void validate(const EngineParams& params);

struct EngineState {
  double p_m = 0.0;      // [Pa]
  double omega_e = 0.0;  // [rad/s]

  friend bool operator==(const EngineState&, const EngineState&) = default;
};

struct StateDerivative {
  double dp_m = 0.0;      // [Pa/s]
  double domega_e = 0.0;  // [rad/s^2]
};

/// Normalized throttle command in [0, 1].
struct NormalizedThrottle {
  double value = 0.0;
};

/// Throttle open area [m^2].
struct ThrottleArea {
  double value = 0.0;
};

using ThrottleCommand = std::variant<NormalizedThrottle, ThrottleArea>;

enum class ThrottleForm {
  kComplemented,  // (1 - cos a / cos a0): area grows with the angle
  kVerbatim,      // cos a / cos a0 as printed: area shrinks with the angle
};

enum class FlowMode {
  kChokedOnly,  // constant choked flow, as in the composite model
  kTwoBranch,   // choked below ratio 0.5, continuity-corrected subsonic above
};

struct ModelModes {
  ThrottleForm throttle_form = ThrottleForm::kComplemented;
  FlowMode flow_mode = FlowMode::kChokedOnly;
};

/// Constant additive disturbance on the state derivative.
struct Disturbance {
  double dp_m = 0.0;
  double domega_e = 0.0;
};

double throttle_angle(double u_alpha, const EngineParams& params);

double throttle_area(double alpha_th, const EngineParams& params,
                     ThrottleForm form = ThrottleForm::kComplemented);

/// Resolves either command variant to an open area [m^2].
double open_area(const ThrottleCommand& cmd, const EngineParams& params,
                 ThrottleForm form);

double intake_mass_flow(double area, double p_m, const EngineParams& params,
                        FlowMode mode = FlowMode::kChokedOnly);

/// Volumetric efficiency, clamped at zero from below.
double volumetric_efficiency(double omega_e, double p_m,
                             const EngineParams& params);

struct CylinderFlows {
  double mixture = 0.0;  // gas mixture aspired by the cylinders [kg/s]
  double air = 0.0;      // [kg/s]
  double fuel = 0.0;     // [kg/s]
};

CylinderFlows cylinder_flows(double p_m, double omega_e,
                             const EngineParams& params);

/// Brake torque [N m] composed from the mean-effective-pressure chain.
double engine_torque(double p_m, double omega_e, const EngineParams& params);

StateDerivative derivatives(const EngineState& state,
                            const ThrottleCommand& input, double load_torque,
                            const EngineParams& params,
                            const ModelModes& modes = {},
                            const Disturbance& disturbance = {});

/// Classical fourth-order Runge-Kutta step with the input held over `dt`.
EngineState rk4_step(const EngineState& state, const ThrottleCommand& input,
                     double load_torque, double dt, const EngineParams& params,
                     const ModelModes& modes = {},
                     const Disturbance& disturbance = {});

struct Equilibrium {
  double p_m = 0.0;    // [Pa]
  double area = 0.0;   // [m^2]
  double omega_e = 0.0;
  double residual = 0.0;  // scaled residual norm at the solution
  int iterations = 0;
};

struct EquilibriumOptions {
  double tolerance = 1e-9;
  int max_iterations = 50;
  double relative_step = 1e-6;
};

/// Solves derivatives == 0 for (p_m, area) at the target speed using a damped
/// Newton iteration on a finite-difference Jacobian. Residuals are scaled by
/// p_a (pressure rate) and by the target speed (acceleration).
Equilibrium find_equilibrium(double omega_target, double load_torque,
                             const EngineParams& params,
                             const ModelModes& modes = {},
                             const EquilibriumOptions& options = {});

/// Scaled residual norm used by find_equilibrium.
double equilibrium_residual(const EngineState& state, double area,
                            double load_torque, const EngineParams& params,
                            const ModelModes& modes = {});

inline double rad_per_s_to_rpm(double omega) {
  return omega * 60.0 / (2.0 * std::numbers::pi);
}

inline double rpm_to_rad_per_s(double rpm) {
  return rpm * 2.0 * std::numbers::pi / 60.0;
}

}  // namespace cpsim::engine
