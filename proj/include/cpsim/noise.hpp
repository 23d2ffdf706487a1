#pragma once

// Seeded Gaussian noise with a fixed, portable generation algorithm:
//
//   1. std::mt19937_64 seeded with the 64-bit scenario seed (the engine's
//      output sequence is fixed by the C++ standard).
//   2. Uniform u in [0, 1): the top 53 bits of one engine output times 2^-53.
//   3. Standard normals by the Box-Muller transform on a pair (u1, u2):
//        r = sqrt(-2 ln(1 - u1)), n1 = r cos(2 pi u2), n2 = r sin(2 pi u2);
//      n1 is returned first, n2 is cached for the next call.
//   4. A draw with covariance S is sqrt(S) n: elementwise square roots for a
//      diagonal S, otherwise V diag(sqrt(lambda)) n from the symmetric
//      eigendecomposition S = V diag(lambda) V'.
//
// std::normal_distribution is not used: its algorithm is left to the library
// implementation, so traces would differ between toolchains.

#include <cstdint>
#include <optional>
#include <random>

#include <Eigen/Dense>

namespace cpsim::noise {

class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}

  double uniform();
  double standard_normal();

  /// Zero-mean scalar draw; throws ConfigError for a negative variance.
  double draw(double variance);

  /// Zero-mean vector draw; throws ConfigError unless cov is symmetric PSD.
  Eigen::Vector2d draw(const Eigen::Matrix2d& cov);

 private:
  std::mt19937_64 engine_;
  std::optional<double> cached_;
};

/// Throws ConfigError unless cov is symmetric positive semidefinite.
void require_psd(const Eigen::Matrix2d& cov);

}  // namespace cpsim::noise
