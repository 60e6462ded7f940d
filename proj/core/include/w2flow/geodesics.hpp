#pragma once

#include "w2flow/measures.hpp"
#include "w2flow/ot.hpp"

namespace w2flow {

/// Displacement interpolation between two uniform clouds of equal size.
///
/// Holds the optimal matching source -> target once solved, so that the
/// geodesic beta_s = ((1 - s) id + s T)_# mu0 and the gradient-flow curve
/// mu*_t = beta_{1 - exp(-t)} evaluate in O(n d). The residual functions below
/// deliberately re-solve OT on the interpolants rather than reuse the matching.
class FlowCurve {
 public:
  const ParticleCloud& source() const noexcept { return source_; }
  const ParticleCloud& target() const noexcept { return target_; }
  const Assignment& matching() const noexcept { return matching_; }
  /// W2(mu0, mud)
  double w2_0d() const noexcept { return w2_0d_; }

 private:
  friend FlowCurve build_flow(const ParticleCloud& mu0, const ParticleCloud& mud);
  FlowCurve(ParticleCloud source, ParticleCloud target, Assignment matching, double w2)
      : source_(std::move(source)), target_(std::move(target)), matching_(std::move(matching)), w2_0d_(w2) {}

  ParticleCloud source_;
  ParticleCloud target_;
  Assignment matching_;
  double w2_0d_;
};

/// Solves the assignment mu0 -> mud. Both clouds must be uniform and of equal size.
FlowCurve build_flow(const ParticleCloud& mu0, const ParticleCloud& mud);

/// beta_s: point i at (1 - s) x_i + s y_sigma(i). Throws for s outside [0, 1].
ParticleCloud geodesic_point(const FlowCurve& curve, double s);

/// mu*_t = beta_{1 - exp(-t)}. Throws for negative or non-finite t.
ParticleCloud flow_point(const FlowCurve& curve, double t);

/// J(mu) = W2(mu, mud)^2 / 2
double energy(const ParticleCloud& cloud, const ParticleCloud& mud);

/// |W2(beta_s1, beta_s2) - (s2 - s1) W2(mu0, mud)|, requires 0 <= s1 <= s2 <= 1.
double geodesic_speed_residual(const FlowCurve& curve, double s1, double s2);

/// |W2(mu*_t, mud) - exp(-t) W2(mu0, mud)|
double decay_residual(const FlowCurve& curve, double t);

/// |J(mu*_t) - J(mu*_s) + (exp(-2s) - exp(-2t)) W2(mu0, mud)^2 / 2|, requires 0 <= s < t.
double energy_identity_residual(const FlowCurve& curve, double s, double t);

/// Local slope of J at cloud, which for this energy equals W2(cloud, mud).
double local_slope(const ParticleCloud& cloud, const ParticleCloud& mud);

/// W2(mu*_{t+h}, mu*_t) / h
double metric_derivative_fd(const FlowCurve& curve, double t, double h);

/// (J(mu*_{t+h}) - J(mu*_{t-h})) / 2h; falls back to a forward difference when t < h.
double energy_rate_fd(const FlowCurve& curve, double t, double h);

}  // namespace w2flow
