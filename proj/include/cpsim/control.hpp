#pragma once

// Discrete-time LQG speed controller: linearization around an equilibrium,
// zero-order-hold discretization, Riccati synthesis of the feedback and
// steady-state Kalman gains, and the per-sample estimator/feedback step.

#include <functional>
#include <iosfwd>

#include <Eigen/Dense>

#include "cpsim/engine.hpp"

namespace cpsim::control {

using Mat2 = Eigen::Matrix2d;
using Vec2 = Eigen::Vector2d;
using RowVec2 = Eigen::RowVector2d;

/// Continuous dynamics z' = f(z, h) with a scalar input.
using Dynamics = std::function<Vec2(const Vec2& z, double h)>;

struct ContinuousModel {
  Mat2 A = Mat2::Zero();
  Vec2 B = Vec2::Zero();
};

struct LinearizationOptions {
  double relative_step = 1e-6;
  double absolute_floor = 1e-9;
};

ContinuousModel linearize(const Dynamics& dynamics, const Vec2& z_bar,
                          double h_bar, const LinearizationOptions& options = {});

/// Exponential of a square matrix by scaling and squaring of a truncated
/// Taylor series.
Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& M);

struct DiscreteModel {
  Mat2 A_d = Mat2::Zero();
  Vec2 B_d = Vec2::Zero();
  Mat2 Q_d = Mat2::Zero();
};

/// Zero-order hold: A_d = exp(A Ts), B_d = int_0^Ts exp(A t) dt B, Q_d = Q Ts.
DiscreteModel discretize(const Mat2& A, const Vec2& B, const Mat2& Q, double Ts);

struct LinearModel {
  Mat2 A_d = Mat2::Zero();
  Vec2 B_d = Vec2::Zero();
  RowVec2 C{0.0, 1.0};
  Mat2 Q_d = Mat2::Zero();
  double R_d = 0.0;
  double Ts = 0.0;
  Vec2 z_bar = Vec2::Zero();  // (p_m [Pa], omega_e [rad/s])
  double h_bar = 0.0;         // equilibrium throttle area [m^2]
};

struct SynthesisWeights {
  Mat2 W = (Mat2() << 0.0, 0.0, 0.0, 1.0).finished();  // C^T C
  double U = 1e10;
};

enum class RiccatiRole { kLqr, kKalman };

struct RiccatiOptions {
  double tolerance = 1e-12;  // relative to max(1, ||P||_inf)
  int max_iterations = 100000;
};

struct RiccatiSolution {
  Eigen::MatrixXd gain;
  Eigen::MatrixXd P;
  int iterations = 0;
};

/// Fixed-point iteration of the discrete algebraic Riccati recursion
///
///   P <- Q + A' P A - A' P B (R + B' P B)^-1 B' P A,  starting from P = Q.
///
/// For the regulator pass (A_d, B_d, W, U): gain = -(U + B'PB)^-1 B'PA, so
/// u = gain * x is stabilizing as written.
/// For the estimator pass (A_d', C', Q_d, R_d): P is the predicted error
/// covariance and gain = P C' (C P C' + R_d)^-1 is the Kalman gain.
RiccatiSolution dare_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                           RiccatiRole role, const RiccatiOptions& options = {});

/// One application of the Riccati map.
Eigen::MatrixXd riccati_map(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                            const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                            const Eigen::MatrixXd& P);

/// ||P - map(P)||_inf / max(1, ||P||_inf).
double riccati_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                        const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                        const Eigen::MatrixXd& P);

double spectral_radius(const Eigen::MatrixXd& M);

struct GainSet {
  RowVec2 L = RowVec2::Zero();
  Vec2 K = Vec2::Zero();
  Mat2 P_ctrl = Mat2::Zero();
  Mat2 P_est = Mat2::Zero();
};

/// Regulator and steady-state Kalman gains; throws SynthesisError if either
/// closed-loop matrix is not Schur stable.
GainSet synthesize_gains(const LinearModel& model, const SynthesisWeights& weights,
                         const RiccatiOptions& options = {});

struct EstimatorState {
  Vec2 x_hat = Vec2::Zero();  // deviation from z_bar
  double u_prev = 0.0;        // deviation input applied over the last sample
};

struct ControllerOutput {
  double u = 0.0;  // deviation command
  EstimatorState est;
};

/// Prediction with the previous input, innovation update with the new
/// measurement, then u = L x_hat.
ControllerOutput controller_step(const EstimatorState& est, double y_dev,
                                 const LinearModel& model, const GainSet& gains);

struct AbsoluteCommand {
  double area = 0.0;  // [m^2], clamped to the physical throttle range
  bool clamped = false;
};

AbsoluteCommand to_absolute(double u_dev, double h_bar,
                            const engine::EngineParams& params);

/// Deviation output [rad/s] from a speed measurement in rpm.
double from_absolute(double y_rpm, const Vec2& z_bar);

/// Inverse of from_absolute.
double deviation_to_rpm(double y_dev, const Vec2& z_bar);

struct DesignInputs {
  engine::EngineParams params;
  engine::ModelModes modes;
  double omega_target = 0.0;  // [rad/s]
  double load_torque = 0.0;
  double Ts = 0.01;
  Mat2 Q = Mat2::Zero();      // continuous process-noise intensity
  double R = 0.0;             // measurement variance [(rad/s)^2]
  SynthesisWeights weights;
};

struct ControllerDesign {
  engine::Equilibrium equilibrium;
  ContinuousModel continuous;
  LinearModel model;
  GainSet gains;
};

/// Equilibrium, linearization, discretization and gain synthesis in one pass.
ControllerDesign design_controller(const DesignInputs& inputs);

/// Plain-text dump of the synthesized matrices.
void write_report(std::ostream& os, const ControllerDesign& design);

}  // namespace cpsim::control
