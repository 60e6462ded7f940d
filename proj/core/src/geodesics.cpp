#include "w2flow/geodesics.hpp"

#include <cmath>

namespace w2flow {

FlowCurve build_flow(const ParticleCloud& mu0, const ParticleCloud& mud) {
  AssignmentSolution sol = solve_assignment(mu0, mud);
  return FlowCurve(mu0, mud, std::move(sol.assignment), sol.w2);
}

ParticleCloud geodesic_point(const FlowCurve& curve, double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw Error("geodesic parameter s must lie in [0, 1]");
  const ParticleCloud& src = curve.source();
  const ParticleCloud& dst = curve.target();
  Matrix points(src.size(), src.dim());
  for (Eigen::Index i = 0; i < src.size(); ++i) {
    const Eigen::Index j = curve.matching().sigma[static_cast<std::size_t>(i)];
    points.row(i) = (1.0 - s) * src.point(i) + s * dst.point(j);
  }
  return ParticleCloud(std::move(points), src.weights());
}

ParticleCloud flow_point(const FlowCurve& curve, double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw Error("flow time t must be finite and non-negative");
  return geodesic_point(curve, -std::expm1(-t));
}

double energy(const ParticleCloud& cloud, const ParticleCloud& mud) {
  const double w = wasserstein(cloud, mud, 2);
  return 0.5 * w * w;
}

double geodesic_speed_residual(const FlowCurve& curve, double s1, double s2) {
  if (!(0.0 <= s1 && s1 <= s2 && s2 <= 1.0)) throw Error("speed residual needs 0 <= s1 <= s2 <= 1");
  const double w = wasserstein(geodesic_point(curve, s1), geodesic_point(curve, s2), 2);
  return std::abs(w - (s2 - s1) * curve.w2_0d());
}

double decay_residual(const FlowCurve& curve, double t) {
  const double w = wasserstein(flow_point(curve, t), curve.target(), 2);
  return std::abs(w - std::exp(-t) * curve.w2_0d());
}

double energy_identity_residual(const FlowCurve& curve, double s, double t) {
  if (!(0.0 <= s && s < t)) throw Error("energy identity needs 0 <= s < t");
  const double j_s = energy(flow_point(curve, s), curve.target());
  const double j_t = energy(flow_point(curve, t), curve.target());
  const double w = curve.w2_0d();
  return std::abs((j_t - j_s) + (std::exp(-2.0 * s) - std::exp(-2.0 * t)) * w * w / 2.0);
}

double local_slope(const ParticleCloud& cloud, const ParticleCloud& mud) { return wasserstein(cloud, mud, 2); }

double metric_derivative_fd(const FlowCurve& curve, double t, double h) {
  if (!(h > 0.0)) throw Error("finite-difference step must be positive");
  return wasserstein(flow_point(curve, t + h), flow_point(curve, t), 2) / h;
}

double energy_rate_fd(const FlowCurve& curve, double t, double h) {
  if (!(h > 0.0)) throw Error("finite-difference step must be positive");
  const ParticleCloud& mud = curve.target();
  if (t < h) return (energy(flow_point(curve, t + h), mud) - energy(flow_point(curve, t), mud)) / h;
  return (energy(flow_point(curve, t + h), mud) - energy(flow_point(curve, t - h), mud)) / (2.0 * h);
}

}  // namespace w2flow
