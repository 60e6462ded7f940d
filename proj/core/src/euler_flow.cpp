#include "w2flow/euler_flow.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>

#include <optional>
#include <sstream>

#include "json.hpp"

namespace w2flow {
namespace {

void check_eps(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw Error("Euler step eps must lie in (0, 1)");
}

ParticleCloud apply_gradient(const ParticleCloud& cloud, const Matrix& grad, double eps) {
  Matrix moved = cloud.points() - eps * grad;
  return ParticleCloud(std::move(moved), cloud.weights());
}

Matrix backend_gradient(const ParticleCloud& cloud, const ParticleCloud& mud, const PotentialBackend& backend) {
  if (std::holds_alternative<SinkhornBackend>(backend)) {
    const auto& sb = std::get<SinkhornBackend>(backend);
    const SinkhornSolution sol = sinkhorn(cloud, mud, {sb.entropic_eps, sb.max_iters, sb.tol, 2});
    return potential_gradient(cloud, sol.plan, mud);
  }
  if (cloud.size() == mud.size() && cloud.is_uniform() && mud.is_uniform())
    return potential_gradient(cloud, solve_assignment(cloud, mud).assignment, mud);
  return potential_gradient(cloud, solve_exact(cloud, mud, 2).plan, mud);
}

}  // namespace

double t_eps(double eps) {
  check_eps(eps);
  return -std::log1p(-eps);
}

ParticleCloud euler_step(const ParticleCloud& cloud, const ParticleCloud& mud, double eps,
                         const PotentialBackend& backend) {
  check_eps(eps);
  return apply_gradient(cloud, backend_gradient(cloud, mud, backend), eps);
}

EulerTrajectory run_euler(const ParticleCloud& mu0, const ParticleCloud& mud, double eps, int n_steps,
                          const PotentialBackend& backend, const EulerOptions& options) {
  check_eps(eps);
  if (n_steps < 0) throw Error("run_euler: n_steps must be non-negative");
  EulerTrajectory traj{eps, t_eps(eps), n_steps, mud, {}};
  traj.snapshots.reserve(static_cast<std::size_t>(n_steps) + 1);
  traj.snapshots.push_back(mu0);

  std::optional<Assignment> frozen;
  if (options.reuse_initial_matching) frozen = solve_assignment(mu0, mud).assignment;

  for (int n = 1; n <= n_steps; ++n) {
    const ParticleCloud& current = traj.snapshots.back();
    if (frozen) {
      traj.snapshots.push_back(apply_gradient(current, potential_gradient(current, *frozen, mud), eps));
    } else {
      traj.snapshots.push_back(euler_step(current, mud, eps, backend));
    }
  }
  return traj;
}

int piecewise_index(const EulerTrajectory& traj, double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw Error("piecewise flow time must be finite and non-negative");
  auto n = static_cast<long>(std::floor(t / traj.eps));
  // Settle rounding in t / eps against the products n * eps themselves.
  while (n > 0 && static_cast<double>(n) * traj.eps > t) --n;
  while (static_cast<double>(n + 1) * traj.eps <= t) ++n;
  if (n > traj.steps) throw Error("time " + std::to_string(t) + " is beyond the trajectory horizon");
  return static_cast<int>(n);
}

const ParticleCloud& piecewise_flow_at(const EulerTrajectory& traj, double t) {
  return traj.snapshots[static_cast<std::size_t>(piecewise_index(traj, t))];
}

namespace {

void check_endpoints(const EulerTrajectory& traj, const FlowCurve& curve) {
  const auto same = [](const ParticleCloud& a, const ParticleCloud& b) {
    return a.size() == b.size() && a.dim() == b.dim() && a.points() == b.points() && a.weights() == b.weights();
  };
  if (!same(traj.snapshots.front(), curve.source()) || !same(traj.target, curve.target()))
    throw Error("trajectory and flow curve have different endpoints");
}

}  // namespace

std::vector<double> on_geodesic_residuals(const EulerTrajectory& traj, const FlowCurve& curve) {
  check_endpoints(traj, curve);
  std::vector<double> out;
  out.reserve(traj.snapshots.size());
  for (std::size_t n = 0; n < traj.snapshots.size(); ++n) {
    const ParticleCloud on_curve = flow_point(curve, static_cast<double>(n) * traj.t_eps);
    out.push_back(wasserstein(traj.snapshots[n], on_curve, 2));
  }
  return out;
}

double step_distance_residual(const EulerTrajectory& traj, int n) {
  if (n < 1 || n > traj.steps) throw Error("step index " + std::to_string(n) + " out of range");
  const ParticleCloud& prev = traj.snapshots[static_cast<std::size_t>(n - 1)];
  const ParticleCloud& next = traj.snapshots[static_cast<std::size_t>(n)];
  return std::abs(wasserstein(prev, next, 2) - traj.eps * wasserstein(prev, traj.target, 2));
}

double convergence_bound(double t, double eps, double w2_0d) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw Error("convergence_bound: t must be finite and non-negative");
  if (!(w2_0d >= 0.0)) throw Error("convergence_bound: distance must be non-negative");
  const double te = t_eps(eps);
  return std::expm1(t * (te / eps - 1.0) + te) * w2_0d;
}

std::vector<double> deviations(const EulerTrajectory& traj, const FlowCurve& curve, const std::vector<double>& t_grid) {
  check_endpoints(traj, curve);
  std::vector<double> out;
  out.reserve(t_grid.size());
  for (const double t : t_grid) out.push_back(wasserstein(piecewise_flow_at(traj, t), flow_point(curve, t), 2));
  return out;
}

double sup_deviation(const EulerTrajectory& traj, const FlowCurve& curve, const std::vector<double>& t_grid) {
  double sup = 0.0;
  for (const double d : deviations(traj, curve, t_grid)) sup = std::max(sup, d);
  return sup;
}

void export_trajectory(const EulerTrajectory& traj, const std::string& directory, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  for (std::size_t n = 0; n < traj.snapshots.size(); ++n) {
    std::ostringstream name;
    name << "snapshot_" << std::setw(4) << std::setfill('0') << n << ".csv";
    write_cloud_csv(traj.snapshots[n], (fs::path(directory) / name.str()).string());
  }
  const nlohmann::json manifest = {
      {"eps", traj.eps}, {"t_eps", traj.t_eps}, {"n_steps", traj.steps}, {"seed", seed}};
  std::ofstream out(fs::path(directory) / "manifest.json");
  if (!out) throw Error("cannot write trajectory manifest in " + directory);
  out << manifest.dump(2) << '\n';
}

}  // namespace w2flow
