#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace causalfuse {

// Replication streams are keyed by (seed, stream index) so parallel and
// serial execution draw identical numbers. All samplers below consume raw
// 64-bit engine output directly, keeping draws independent of the standard
// library's distribution implementations.

std::uint64_t splitmix64(std::uint64_t& state);

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream);

// Uniform on (0,1]; never returns 0 so log() is safe.
double uniform01(std::mt19937_64& rng);

// Uniform integer in [0, n), n >= 1. Rejection sampling, exactly uniform.
std::uint64_t bounded_uint(std::mt19937_64& rng, std::uint64_t n);

// Standard normal via Box-Muller, second draw cached.
class NormalSampler {
 public:
  double operator()(std::mt19937_64& rng);

 private:
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Zero-mean multivariate normal from an eigendecomposition factor of the
// covariance (handles positive semidefinite, e.g. sigma_v^2 = 0).
// Throws std::invalid_argument if the matrix is not PSD within tolerance.
class MvnFactor {
 public:
  explicit MvnFactor(const Eigen::MatrixXd& cov, double tol = 1e-12);

  Eigen::VectorXd draw(std::mt19937_64& rng, NormalSampler& normal) const;
  Eigen::Index dim() const noexcept { return factor_.rows(); }

 private:
  Eigen::MatrixXd factor_;
};

}  // namespace causalfuse
