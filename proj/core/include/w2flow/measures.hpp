#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "w2flow/error.hpp"

namespace w2flow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Weighted point set in R^d, the empirical stand-in for a probability
/// measure with finite second moment. Rows of points() are support points.
///
/// Immutable after construction: weights are non-negative, sum to one within
/// 1e-12, and all coordinates are finite.
class ParticleCloud {
 public:
  static constexpr double kMassTolerance = 1e-12;

  /// Validates and stores. Throws Error on empty input, non-finite
  /// coordinates, negative weights, or total mass off by more than 1e-12.
  ParticleCloud(Matrix points, Vector weights);

  const Matrix& points() const noexcept { return points_; }
  const Vector& weights() const noexcept { return weights_; }
  Eigen::Index size() const noexcept { return points_.rows(); }
  Eigen::Index dim() const noexcept { return points_.cols(); }
  auto point(Eigen::Index i) const { return points_.row(i); }

  /// True iff every weight is exactly equal to every other.
  bool is_uniform() const noexcept;

 private:
  Matrix points_;
  Vector weights_;
};

/// Cloud with weights exactly 1/n.
ParticleCloud uniform_cloud(Matrix points);

struct GaussianSpec {
  Vector mean;
  Matrix covariance;

  /// Throws unless covariance is square, matches mean, symmetric to 1e-12
  /// and strictly positive definite.
  void validate() const;
};

/// n i.i.d. draws mean + L z, with L the Cholesky factor and z standard normal.
/// A pure function of (spec, n, seed).
ParticleCloud sample_gaussian(const GaussianSpec& spec, Eigen::Index n, std::uint64_t seed);

/// Equal mixture of k isotropic 2-D Gaussians with means radius*(cos a_j, sin a_j),
/// a_j = 2 pi j / k, counterclockwise from angle 0.
ParticleCloud sample_gaussian_ring(int k, double radius, double sigma, Eigen::Index n,
                                   std::uint64_t seed);

/// Modes of sample_gaussian_ring as a k x 2 matrix.
Matrix ring_modes(int k, double radius);

using PointMap = std::function<Vector(const Vector&)>;

/// Image of each support point under map; weights are carried over unchanged.
ParticleCloud pushforward(const ParticleCloud& cloud, const PointMap& map);

/// sum_i w_i |x_i|^2
double second_moment(const ParticleCloud& cloud);

/// CSV point-cloud file: header `x0,...,x{d-1}[,weight]`, one row per point.
/// Without a weight column the cloud is uniform.
ParticleCloud read_cloud_csv(const std::string& path);
void write_cloud_csv(const ParticleCloud& cloud, const std::string& path, bool with_weights = true);

}  // namespace w2flow
