#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "w2flow/geodesics.hpp"
#include "w2flow/measures.hpp"
#include "w2flow/ot.hpp"

namespace w2flow {

struct ExactBackend {};

struct SinkhornBackend {
  double entropic_eps = 1e-3;
  int max_iters = 20000;
  double tol = 1e-10;
};

/// Source of the Kantorovich potential gradient used by each Euler step.
using PotentialBackend = std::variant<ExactBackend, SinkhornBackend>;

/// t_eps = -ln(1 - eps), the unique t > 0 with eps = 1 - exp(-t).
double t_eps(double eps);

/// x_i - eps * grad(phi)(x_i), with grad(phi) = id - T and T the optimal map
/// (exact backend) or the barycentric projection of an entropic plan.
ParticleCloud euler_step(const ParticleCloud& cloud, const ParticleCloud& mud, double eps,
                         const PotentialBackend& backend = ExactBackend{});

/// Snapshots mu_{0,eps} .. mu_{N,eps} of the forward Euler scheme toward mud.
struct EulerTrajectory {
  double eps;
  double t_eps;
  int steps;
  /// The target measure mud the scheme flows toward.
  ParticleCloud target;
  std::vector<ParticleCloud> snapshots;

  /// Right end of the piecewise-constant flow's domain, (N + 1) eps.
  double horizon() const { return (steps + 1) * eps; }
};

struct EulerOptions {
  /// Reuse the initial optimal matching for every step instead of re-solving.
  /// Only for benchmarking; correctness tests never set it.
  bool reuse_initial_matching = false;
};

/// Applies euler_step n_steps times, re-solving OT from each snapshot.
EulerTrajectory run_euler(const ParticleCloud& mu0, const ParticleCloud& mud, double eps, int n_steps,
                          const PotentialBackend& backend = ExactBackend{}, const EulerOptions& options = {});

/// Index n with t in [n eps, (n + 1) eps). Throws beyond the horizon.
int piecewise_index(const EulerTrajectory& traj, double t);

/// The piecewise-constant flow: snapshot n on [n eps, (n + 1) eps).
const ParticleCloud& piecewise_flow_at(const EulerTrajectory& traj, double t);

/// Entry n is W2(mu_{n,eps}, mu*_{n t_eps}), each by a fresh exact solve.
std::vector<double> on_geodesic_residuals(const EulerTrajectory& traj, const FlowCurve& curve);

/// |W2(mu_{n-1}, mu_n) - eps W2(mu_{n-1}, mud)| for 1 <= n <= N.
double step_distance_residual(const EulerTrajectory& traj, int n);

/// (exp(t (t_eps / eps - 1) + t_eps) - 1) W2(mu0, mud)
double convergence_bound(double t, double eps, double w2_0d);

/// max over the grid of W2(mu^eps_t, mu*_t).
double sup_deviation(const EulerTrajectory& traj, const FlowCurve& curve, const std::vector<double>& t_grid);

/// Pointwise deviations W2(mu^eps_t, mu*_t) on the grid.
std::vector<double> deviations(const EulerTrajectory& traj, const FlowCurve& curve, const std::vector<double>& t_grid);

/// One CSV per snapshot (snapshot_0000.csv, ...) plus manifest.json with
/// {eps, t_eps, n_steps, seed}.
void export_trajectory(const EulerTrajectory& traj, const std::string& directory, std::uint64_t seed);

}  // namespace w2flow
