#include "cpsim/noise.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "cpsim/errors.hpp"

namespace cpsim::noise {

double GaussianSource::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double GaussianSource::standard_normal() {
  if (cached_) {
    const double n = *cached_;
    cached_.reset();
    return n;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_ = r * std::sin(angle);
  return r * std::cos(angle);
}

double GaussianSource::draw(double variance) {
  if (!(variance >= 0.0) || !std::isfinite(variance)) {
    throw ConfigError(fmt::format("noise variance {} is not valid", variance));
  }
  return std::sqrt(variance) * standard_normal();
}

void require_psd(const Eigen::Matrix2d& cov) {
  if (!cov.allFinite() || cov(0, 1) != cov(1, 0)) {
    throw ConfigError("noise covariance must be finite and symmetric");
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const double floor = -1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < floor) {
    throw ConfigError(fmt::format(
        "noise covariance is not positive semidefinite (eigenvalue {})",
        eig.eigenvalues().minCoeff()));
  }
}

Eigen::Vector2d GaussianSource::draw(const Eigen::Matrix2d& cov) {
  require_psd(cov);
  const Eigen::Vector2d n(standard_normal(), standard_normal());
  if (cov(0, 1) == 0.0) {
    return {std::sqrt(cov(0, 0)) * n(0), std::sqrt(cov(1, 1)) * n(1)};
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const Eigen::Vector2d scale = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * scale.asDiagonal() * n;
}

}  // namespace cpsim::noise
