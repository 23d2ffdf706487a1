#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cpsim/control.hpp"
#include "cpsim/errors.hpp"
#include "cpsim/selfcheck.hpp"
#include "cpsim/sim.hpp"

using namespace cpsim;
using namespace cpsim::control;

namespace {

DesignInputs default_inputs() {
  const sim::ScenarioConfig cfg;
  DesignInputs in;
  in.params = cfg.engine;
  in.modes = cfg.modes;
  in.omega_target = engine::rpm_to_rad_per_s(cfg.omega_target_rpm);
  in.load_torque = cfg.load_torque;
  in.Ts = cfg.control_period_ms * 1e-3;
  in.Q = cfg.noise.Q;
  in.R = cfg.noise.R;
  in.weights = cfg.weights;
  return in;
}

const ControllerDesign& default_design() {
  static const ControllerDesign design = design_controller(default_inputs());
  return design;
}

// Forward Euler on X' = M X, X(0) = I, with n steps over T.
Eigen::MatrixXd euler_exp(const Eigen::MatrixXd& M, double T, int n) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Identity(M.rows(), M.cols());
  const double h = T / n;
  for (int i = 0; i < n; ++i) X += h * M * X;
  return X;
}

double max_rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max(std::abs(b.data()[i]), 1e-300);
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("linearization") {
  SUBCASE("recovers a linear system") {
    Mat2 M;
    M << -3.0, 2.5, 0.125, -7.0;
    // Input column scaled like the engine's, where h is a tiny area.
    const Vec2 n(4e9, -5e5);
    const Dynamics f = [&](const Vec2& z, double h) -> Vec2 { return M * z + n * h; };
    const auto lin = linearize(f, Vec2(1e4, 400.0), 2e-5);
    CHECK(max_rel(lin.A, M) < 1e-8);
    CHECK(max_rel(lin.B, n) < 1e-8);
  }
  SUBCASE("zero dynamics give zero matrices") {
    const Dynamics f = [](const Vec2&, double) -> Vec2 { return Vec2::Zero(); };
    const auto lin = linearize(f, Vec2(4.5e4, 439.8), 7.4e-5);
    CHECK(lin.A.isZero(0.0));
    CHECK(lin.B.isZero(0.0));
  }
  SUBCASE("engine Jacobian is insensitive to step halving") {
    const auto& d = default_design();
    const auto in = default_inputs();
    const Dynamics f = [&](const Vec2& z, double h) -> Vec2 {
      const auto s = engine::derivatives({z(0), z(1)}, engine::ThrottleArea{h},
                                         in.load_torque, in.params, in.modes);
      return {s.dp_m, s.domega_e};
    };
    CHECK(selfcheck::jacobian_step_halving(f, d.model.z_bar, d.model.h_bar) < 1e-6);
  }
  SUBCASE("non-finite dynamics are rejected") {
    const Dynamics f = [](const Vec2&, double) -> Vec2 { return Vec2(NAN, 0.0); };
    CHECK_THROWS_AS(linearize(f, Vec2(1.0, 1.0), 1.0), LinearizationError);
  }
}

TEST_CASE("matrix exponential") {
  SUBCASE("of zero is the identity") {
    const Eigen::MatrixXd I = matrix_exponential(Eigen::MatrixXd::Zero(3, 3));
    CHECK(I.isIdentity(0.0));
  }
  SUBCASE("scalar case") {
    Eigen::MatrixXd a(1, 1);
    for (double v : {-20.0, -0.3, 0.0, 1.5}) {
      a(0, 0) = v;
      CHECK(matrix_exponential(a)(0, 0) == doctest::Approx(std::exp(v)).epsilon(1e-14));
    }
  }
  SUBCASE("nilpotent case") {
    Eigen::MatrixXd n(2, 2);
    n << 0.0, 3.0, 0.0, 0.0;
    const Eigen::MatrixXd e = matrix_exponential(n);
    CHECK(e(0, 0) == 1.0);
    CHECK(e(0, 1) == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(e(1, 0) == 0.0);
    CHECK(e(1, 1) == 1.0);
  }
}

TEST_CASE("zero-order-hold discretization") {
  const auto& d = default_design();
  const Mat2 A = d.continuous.A;
  const Vec2 B = d.continuous.B;
  const double Ts = 0.01;
  const auto disc = discretize(A, B, Mat2::Identity(), Ts);

  // Augmented system [[A, B], [0, 0]] integrated with Euler at two step
  // counts, then Richardson-extrapolated.
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(3, 3);
  M.topLeftCorner(2, 2) = A;
  M.topRightCorner(2, 1) = B;
  const Eigen::MatrixXd e1 = euler_exp(M, Ts, 1000);
  const Eigen::MatrixXd e2 = euler_exp(M, Ts, 2000);
  const Eigen::MatrixXd rich = 2.0 * e2 - e1;

  CHECK(max_rel(disc.A_d, rich.topLeftCorner(2, 2)) < 1e-6);
  CHECK(max_rel(disc.B_d, rich.topRightCorner(2, 1)) < 1e-6);

  // The state block of plain Euler lies within its first-order error bound
  // h*T*||A||^2 e^{T||A||}.
  const double normA = A.lpNorm<Eigen::Infinity>();
  const double bound = (Ts / 1000) * Ts * normA * normA * std::exp(Ts * normA);
  const Eigen::MatrixXd exact = matrix_exponential(A * Ts);
  CHECK((e1.topLeftCorner(2, 2) - exact).lpNorm<Eigen::Infinity>() <= bound);

  CHECK(disc.Q_d.isApprox(Mat2::Identity() * Ts));
  CHECK_THROWS_AS(discretize(A, B, Mat2::Identity(), 0.0), DiscretizationError);
}

TEST_CASE("discrete algebraic Riccati equation") {
  SUBCASE("zero dynamics: P = Q and a zero gain") {
    const Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 2);
    const Eigen::MatrixXd B = (Eigen::MatrixXd(2, 1) << 1.0, 0.0).finished();
    const Eigen::MatrixXd Q = (Eigen::MatrixXd(2, 2) << 2.0, 0.0, 0.0, 3.0).finished();
    const Eigen::MatrixXd R = Eigen::MatrixXd::Identity(1, 1);
    const auto sol = dare_solve(A, B, Q, R, RiccatiRole::kLqr);
    CHECK(sol.P.isApprox(Q, 1e-15));
    CHECK(sol.gain.isZero(0.0));
  }
  SUBCASE("scalar case matches the positive root of the quadratic") {
    const double a = 0.9, b = 1.0, q = 1.0, r = 1.0;
    // b^2 P^2 + (r - a^2 r - q b^2) P - q r = 0
    const double c1 = r - a * a * r - q * b * b;
    const double P = (-c1 + std::sqrt(c1 * c1 + 4 * b * b * q * r)) / (2 * b * b);
    const Eigen::MatrixXd m(Eigen::MatrixXd::Constant(1, 1, a));
    const auto sol = dare_solve(m, Eigen::MatrixXd::Constant(1, 1, b),
                                Eigen::MatrixXd::Constant(1, 1, q),
                                Eigen::MatrixXd::Constant(1, 1, r), RiccatiRole::kLqr);
    CHECK(sol.P(0, 0) == doctest::Approx(P).epsilon(1e-10));
    CHECK(sol.gain(0, 0) == doctest::Approx(-b * P * a / (r + b * b * P)).epsilon(1e-10));
    CHECK(std::abs(a + b * sol.gain(0, 0)) < 1.0);
  }
  SUBCASE("engine design: residuals and stability") {
    const auto& d = default_design();
    const auto& m = d.model;
    CHECK(riccati_residual(m.A_d, m.B_d, default_inputs().weights.W,
                           Eigen::MatrixXd::Constant(1, 1, default_inputs().weights.U),
                           d.gains.P_ctrl) < 1e-10);
    CHECK(riccati_residual(m.A_d.transpose(), m.C.transpose(), m.Q_d,
                           Eigen::MatrixXd::Constant(1, 1, m.R_d), d.gains.P_est) < 1e-10);
    CHECK(spectral_radius(m.A_d + m.B_d * d.gains.L) < 1.0);
    CHECK(spectral_radius(m.A_d - d.gains.K * m.C * m.A_d) < 1.0);
    CHECK(d.gains.P_ctrl.isApprox(d.gains.P_ctrl.transpose()));
    CHECK(d.gains.P_est.isApprox(d.gains.P_est.transpose()));
  }
  SUBCASE("unstabilizable pair is reported") {
    const Eigen::MatrixXd A = Eigen::MatrixXd::Constant(1, 1, 2.0);
    const Eigen::MatrixXd B = Eigen::MatrixXd::Zero(1, 1);
    CHECK_THROWS_AS(dare_solve(A, B, Eigen::MatrixXd::Identity(1, 1),
                               Eigen::MatrixXd::Identity(1, 1), RiccatiRole::kLqr,
                               {1e-12, 200}),
                    SynthesisError);
  }
}

TEST_CASE("controller step") {
  LinearModel m;
  m.A_d << 0.5, 0.1, 0.0, 0.8;
  m.B_d << 2.0, 1.0;
  GainSet g;
  g.L << -0.1, -0.2;

  SUBCASE("with zero Kalman gain the estimate is the open-loop prediction") {
    g.K.setZero();
    EstimatorState est;
    est.x_hat << 1.0, 2.0;
    est.u_prev = 0.5;
    const auto out = controller_step(est, 123.0, m, g);
    CHECK(out.est.x_hat(0) == doctest::Approx(0.5 + 0.2 + 1.0));
    CHECK(out.est.x_hat(1) == doctest::Approx(1.6 + 0.5));
    CHECK(out.u == doctest::Approx(-0.1 * 1.7 - 0.2 * 2.1));
    CHECK(out.est.u_prev == out.u);
  }
  SUBCASE("innovation update") {
    g.K << 0.5, 0.25;
    EstimatorState est;
    const auto out = controller_step(est, 4.0, m, g);
    CHECK(out.est.x_hat(0) == doctest::Approx(2.0));
    CHECK(out.est.x_hat(1) == doctest::Approx(1.0));
    CHECK(out.u == doctest::Approx(-0.4));
  }
  SUBCASE("at equilibrium the command is zero") {
    g.K << 0.5, 0.25;
    const auto out = controller_step(EstimatorState{}, 0.0, m, g);
    CHECK(out.u == 0.0);
  }
  CHECK_THROWS_AS(controller_step(EstimatorState{}, NAN, m, g), EstimatorError);
}

TEST_CASE("closed loop on the linear model settles from a 50 rpm offset") {
  const auto& d = default_design();
  const auto& m = d.model;
  Vec2 x(0.0, engine::rpm_to_rad_per_s(50.0));
  EstimatorState est;
  double u = 0.0;
  for (int k = 0; k < 200; ++k) {
    x = m.A_d * x + m.B_d * u;
    const auto out = controller_step(est, m.C.dot(x), m, d.gains);
    est = out.est;
    u = out.u;
  }
  CHECK(std::abs(engine::rad_per_s_to_rpm(x(1))) < 5.0);
}

TEST_CASE("absolute and deviation conversions") {
  const engine::EngineParams p;
  const auto c = to_absolute(1e-6, 7.44e-5, p);
  CHECK(c.area == doctest::Approx(7.54e-5).epsilon(1e-14));
  CHECK_FALSE(c.clamped);
  const auto low = to_absolute(-1.0, 7.44e-5, p);
  CHECK(low.area == p.A_th_leak);
  CHECK(low.clamped);
  const auto high = to_absolute(1.0, 7.44e-5, p);
  CHECK(high.area == p.max_throttle_area());
  CHECK(high.clamped);

  const Vec2 z_bar(4.5e4, engine::rpm_to_rad_per_s(4200.0));
  CHECK(from_absolute(4200.0, z_bar) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(deviation_to_rpm(from_absolute(4321.5, z_bar), z_bar) ==
        doctest::Approx(4321.5).epsilon(1e-14));
}

TEST_CASE("design report lists the gains") {
  std::ostringstream os;
  write_report(os, default_design());
  CHECK(os.str().find("L") != std::string::npos);
  CHECK(os.str().find("K") != std::string::npos);
}
