#include "w2flow/measures.hpp"

#include <cmath>
#include <numbers>

#include "w2flow/random.hpp"

namespace w2flow {

ParticleCloud::ParticleCloud(Matrix points, Vector weights)
    : points_(std::move(points)), weights_(std::move(weights)) {
  if (points_.rows() == 0) throw Error("empty cloud");
  if (points_.cols() == 0) throw Error("cloud dimension must be at least 1");
  if (weights_.size() != points_.rows())
    throw Error("weight count " + std::to_string(weights_.size()) + " does not match point count " +
                std::to_string(points_.rows()));
  if (!points_.allFinite()) throw Error("cloud has non-finite coordinates");
  if (!weights_.allFinite() || (weights_.array() < 0.0).any())
    throw Error("cloud weights must be finite and non-negative");
  const double total = weights_.sum();
  if (std::abs(total - 1.0) > kMassTolerance)
    throw Error("cloud weights sum to " + std::to_string(total) + ", expected 1");
}

bool ParticleCloud::is_uniform() const noexcept {
  const double w0 = weights_[0];
  return (weights_.array() == w0).all();
}

ParticleCloud uniform_cloud(Matrix points) {
  if (points.rows() == 0) throw Error("empty cloud");
  const Eigen::Index n = points.rows();
  return ParticleCloud(std::move(points), Vector::Constant(n, 1.0 / static_cast<double>(n)));
}

void GaussianSpec::validate() const {
  const Eigen::Index d = mean.size();
  if (d == 0) throw Error("gaussian mean must be non-empty");
  if (covariance.rows() != d || covariance.cols() != d)
    throw Error("gaussian covariance must be " + std::to_string(d) + "x" + std::to_string(d));
  if (!mean.allFinite() || !covariance.allFinite()) throw Error("gaussian parameters must be finite");
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw Error("gaussian covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0)
    throw Error("gaussian covariance is not positive definite");
}

ParticleCloud sample_gaussian(const GaussianSpec& spec, Eigen::Index n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw Error("empty cloud");
  Eigen::LLT<Matrix> llt(spec.covariance);
  if (llt.info() != Eigen::Success) throw Error("gaussian covariance is not positive definite");
  const Matrix lower = llt.matrixL();

  const Eigen::Index d = spec.mean.size();
  Rng rng(seed);
  Matrix points(n, d);
  Vector z(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) z[k] = rng.normal();
    points.row(i) = (spec.mean + lower * z).transpose();
  }
  return uniform_cloud(std::move(points));
}

Matrix ring_modes(int k, double radius) {
  if (k < 1) throw Error("ring needs at least one mode");
  if (!(radius > 0.0) || !std::isfinite(radius)) throw Error("ring radius must be positive");
  Matrix modes(k, 2);
  for (int j = 0; j < k; ++j) {
    const double angle = 2.0 * std::numbers::pi * j / k;
    modes(j, 0) = radius * std::cos(angle);
    modes(j, 1) = radius * std::sin(angle);
  }
  return modes;
}

ParticleCloud sample_gaussian_ring(int k, double radius, double sigma, Eigen::Index n,
                                   std::uint64_t seed) {
  const Matrix modes = ring_modes(k, radius);
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error("ring sigma must be positive");
  if (n < 1) throw Error("empty cloud");

  Rng rng(seed);
  Matrix points(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(k)));
    const double gx = rng.normal();
    const double gy = rng.normal();
    points(i, 0) = modes(j, 0) + sigma * gx;
    points(i, 1) = modes(j, 1) + sigma * gy;
  }
  return uniform_cloud(std::move(points));
}

ParticleCloud pushforward(const ParticleCloud& cloud, const PointMap& map) {
  Matrix out(cloud.size(), cloud.dim());
  Eigen::Index out_dim = -1;
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const Vector y = map(cloud.points().row(i).transpose());
    if (out_dim < 0) {
      out_dim = y.size();
      if (out_dim != cloud.dim()) out.resize(cloud.size(), out_dim);
    } else if (y.size() != out_dim) {
      throw Error("pushforward map returned inconsistent dimensions");
    }
    if (!y.allFinite()) throw Error("pushforward produced a non-finite coordinate at point " + std::to_string(i));
    out.row(i) = y.transpose();
  }
  return ParticleCloud(std::move(out), cloud.weights());
}

double second_moment(const ParticleCloud& cloud) {
  return cloud.weights().dot(cloud.points().rowwise().squaredNorm());
}

}  // namespace w2flow
