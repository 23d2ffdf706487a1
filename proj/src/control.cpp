#include "cpsim/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cpsim/errors.hpp"

namespace cpsim::control {

ContinuousModel linearize(const Dynamics& dynamics, const Vec2& z_bar,
                          double h_bar, const LinearizationOptions& options) {
  auto step_for = [&](double x) {
    return options.relative_step * std::max(std::abs(x), options.absolute_floor);
  };
  auto eval = [&](const Vec2& z, double h) {
    const Vec2 f = dynamics(z, h);
    if (!f.allFinite()) {
      throw LinearizationError(
          fmt::format("dynamics not finite at z=({}, {}), h={}", z(0), z(1), h));
    }
    return f;
  };

  ContinuousModel lin;
  for (int j = 0; j < 2; ++j) {
    const double h = step_for(z_bar(j));
    Vec2 plus = z_bar, minus = z_bar;
    plus(j) += h;
    minus(j) -= h;
    lin.A.col(j) = (eval(plus, h_bar) - eval(minus, h_bar)) / (2.0 * h);
  }
  const double h = step_for(h_bar);
  lin.B = (eval(z_bar, h_bar + h) - eval(z_bar, h_bar - h)) / (2.0 * h);
  return lin;
}

Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols()) {
    throw DiscretizationError("matrix exponential needs a square matrix");
  }
  if (!M.allFinite()) {
    throw DiscretizationError("matrix exponential of a non-finite matrix");
  }
  const Eigen::Index n = M.rows();
  const double norm = M.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  }
  const Eigen::MatrixXd X = M / std::ldexp(1.0, squarings);

  Eigen::MatrixXd sum = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  for (int k = 1; k <= 60; ++k) {
    term = term * X / static_cast<double>(k);
    sum += term;
    const double term_norm = term.cwiseAbs().maxCoeff();
    if (!std::isfinite(term_norm)) {
      throw DiscretizationError("matrix exponential series diverged");
    }
    if (term_norm <= 1e-18 * sum.cwiseAbs().maxCoeff()) break;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  if (!sum.allFinite()) {
    throw DiscretizationError("matrix exponential overflowed while squaring");
  }
  return sum;
}

DiscreteModel discretize(const Mat2& A, const Vec2& B, const Mat2& Q, double Ts) {
  if (!(Ts > 0.0)) {
    throw DiscretizationError(fmt::format("sampling time {} is not positive", Ts));
  }
  // exp([A B; 0 0] Ts) = [A_d B_d; 0 1]
  Eigen::Matrix3d M = Eigen::Matrix3d::Zero();
  M.topLeftCorner<2, 2>() = A;
  M.topRightCorner<2, 1>() = B;
  const Eigen::MatrixXd phi = matrix_exponential(M * Ts);

  DiscreteModel d;
  d.A_d = phi.topLeftCorner(2, 2);
  d.B_d = phi.topRightCorner(2, 1);
  d.Q_d = Q * Ts;
  return d;
}

Eigen::MatrixXd riccati_map(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                            const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                            const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd BtPA = B.transpose() * P * A;
  const Eigen::MatrixXd S = R + B.transpose() * P * B;
  Eigen::MatrixXd next =
      Q + A.transpose() * P * A - BtPA.transpose() * S.ldlt().solve(BtPA);
  return (next + next.transpose()) / 2.0;
}

double riccati_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                        const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                        const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd diff = P - riccati_map(A, B, Q, R, P);
  const double scale = std::max(1.0, P.cwiseAbs().rowwise().sum().maxCoeff());
  return diff.cwiseAbs().rowwise().sum().maxCoeff() / scale;
}

double spectral_radius(const Eigen::MatrixXd& M) {
  Eigen::EigenSolver<Eigen::MatrixXd> solver(M, false);
  if (solver.info() != Eigen::Success) {
    return std::numeric_limits<double>::infinity();
  }
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

RiccatiSolution dare_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                           RiccatiRole role, const RiccatiOptions& options) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != B.cols() || R.cols() != B.cols()) {
    throw SynthesisError("Riccati operands have inconsistent dimensions");
  }

  RiccatiSolution sol;
  Eigen::MatrixXd P = Q;
  bool converged = false;
  int iter = 0;
  while (iter < options.max_iterations) {
    Eigen::MatrixXd next = riccati_map(A, B, Q, R, P);
    ++iter;
    if (!next.allFinite()) {
      throw SynthesisError(
          fmt::format("Riccati iteration diverged after {} steps", iter));
    }
    const double change = (next - P).cwiseAbs().rowwise().sum().maxCoeff();
    const double scale =
        std::max(1.0, next.cwiseAbs().rowwise().sum().maxCoeff());
    P = std::move(next);
    if (change < options.tolerance * scale) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw SynthesisError(fmt::format(
        "Riccati iteration did not converge in {} steps", options.max_iterations));
  }

  const Eigen::MatrixXd S = R + B.transpose() * P * B;
  Eigen::MatrixXd closed;
  if (role == RiccatiRole::kLqr) {
    sol.gain = -S.ldlt().solve(B.transpose() * P * A);
    closed = A + B * sol.gain;
  } else {
    sol.gain = P * B * S.inverse();
    // Estimator error dynamics: (I - K C) A_d with A_d = A', C = B'.
    closed = (Eigen::MatrixXd::Identity(n, n) - sol.gain * B.transpose()) *
             A.transpose();
  }
  const double rho = spectral_radius(closed);
  if (!(rho < 1.0)) {
    throw SynthesisError(fmt::format(
        "{} closed loop is not stable (spectral radius {})",
        role == RiccatiRole::kLqr ? "regulator" : "estimator", rho));
  }
  sol.P = std::move(P);
  sol.iterations = iter;
  return sol;
}

GainSet synthesize_gains(const LinearModel& model, const SynthesisWeights& weights,
                         const RiccatiOptions& options) {
  if (!(weights.U > 0.0)) {
    throw SynthesisError("input weight U must be positive");
  }
  if (!(model.R_d > 0.0)) {
    throw SynthesisError("measurement variance R_d must be positive");
  }
  Eigen::MatrixXd U(1, 1), Rd(1, 1);
  U << weights.U;
  Rd << model.R_d;

  const RiccatiSolution lqr =
      dare_solve(model.A_d, model.B_d, weights.W, U, RiccatiRole::kLqr, options);
  const RiccatiSolution kal = dare_solve(model.A_d.transpose(),
                                         model.C.transpose(), model.Q_d, Rd,
                                         RiccatiRole::kKalman, options);
  GainSet gains;
  gains.L = lqr.gain;
  gains.K = kal.gain;
  gains.P_ctrl = lqr.P;
  gains.P_est = kal.P;
  return gains;
}

ControllerOutput controller_step(const EstimatorState& est, double y_dev,
                                 const LinearModel& model, const GainSet& gains) {
  if (!std::isfinite(y_dev)) {
    throw EstimatorError("non-finite speed measurement");
  }
  const Vec2 predicted = model.A_d * est.x_hat + model.B_d * est.u_prev;
  const double innovation = y_dev - model.C.dot(predicted);
  ControllerOutput out;
  out.est.x_hat = predicted + gains.K * innovation;
  out.u = gains.L.dot(out.est.x_hat);
  out.est.u_prev = out.u;
  return out;
}

AbsoluteCommand to_absolute(double u_dev, double h_bar,
                            const engine::EngineParams& params) {
  const double raw = h_bar + u_dev;
  AbsoluteCommand cmd;
  cmd.area = std::clamp(raw, params.A_th_leak, params.max_throttle_area());
  cmd.clamped = cmd.area != raw;
  if (cmd.clamped) {
    spdlog::debug("throttle command {} clamped to {}", raw, cmd.area);
  }
  return cmd;
}

double from_absolute(double y_rpm, const Vec2& z_bar) {
  return engine::rpm_to_rad_per_s(y_rpm) - z_bar(1);
}

double deviation_to_rpm(double y_dev, const Vec2& z_bar) {
  return engine::rad_per_s_to_rpm(y_dev + z_bar(1));
}

ControllerDesign design_controller(const DesignInputs& in) {
  ControllerDesign design;
  design.equilibrium = engine::find_equilibrium(in.omega_target, in.load_torque,
                                                in.params, in.modes);
  const Vec2 z_bar(design.equilibrium.p_m, design.equilibrium.omega_e);
  const double h_bar = design.equilibrium.area;

  const Dynamics f = [&](const Vec2& z, double h) {
    const auto d = engine::derivatives({z(0), z(1)}, engine::ThrottleArea{h},
                                       in.load_torque, in.params, in.modes);
    return Vec2(d.dp_m, d.domega_e);
  };
  design.continuous = linearize(f, z_bar, h_bar);

  const DiscreteModel disc =
      discretize(design.continuous.A, design.continuous.B, in.Q, in.Ts);
  design.model.A_d = disc.A_d;
  design.model.B_d = disc.B_d;
  design.model.Q_d = disc.Q_d;
  design.model.R_d = in.R;
  design.model.Ts = in.Ts;
  design.model.z_bar = z_bar;
  design.model.h_bar = h_bar;
  design.gains = synthesize_gains(design.model, in.weights);
  return design;
}

void write_report(std::ostream& os, const ControllerDesign& d) {
  const Eigen::IOFormat fmt(Eigen::FullPrecision, 0, " ", "\n", "  ", "");
  os << "equilibrium\n";
  os << fmt::format("  p_m    {:.17g} Pa\n", d.equilibrium.p_m);
  os << fmt::format("  omega  {:.17g} rad/s ({:.17g} rpm)\n",
                    d.equilibrium.omega_e,
                    engine::rad_per_s_to_rpm(d.equilibrium.omega_e));
  os << fmt::format("  area   {:.17g} m^2\n", d.equilibrium.area);
  os << fmt::format("  residual {:.3e} ({} Newton steps)\n",
                    d.equilibrium.residual, d.equilibrium.iterations);
  os << fmt::format("Ts {:.17g} s\n", d.model.Ts);
  os << "A\n" << d.continuous.A.format(fmt) << "\n";
  os << "B\n" << d.continuous.B.format(fmt) << "\n";
  os << "A_d\n" << d.model.A_d.format(fmt) << "\n";
  os << "B_d\n" << d.model.B_d.format(fmt) << "\n";
  os << "Q_d\n" << d.model.Q_d.format(fmt) << "\n";
  os << fmt::format("R_d\n  {:.17g}\n", d.model.R_d);
  os << "L\n" << d.gains.L.format(fmt) << "\n";
  os << "K\n" << d.gains.K.format(fmt) << "\n";
  os << "P_ctrl\n" << d.gains.P_ctrl.format(fmt) << "\n";
  os << "P_est\n" << d.gains.P_est.format(fmt) << "\n";
  os << fmt::format(
      "spectral radius regulator {:.6f} estimator {:.6f}\n",
      spectral_radius(d.model.A_d + d.model.B_d * d.gains.L),
      spectral_radius((Mat2::Identity() - d.gains.K * d.model.C) * d.model.A_d));
}

}  // namespace cpsim::control
