// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "w2flow/euler_flow.hpp"
#include "w2flow/geodesics.hpp"
#include "w2flow/mlp.hpp"
#include "w2flow/ot.hpp"
#include "w2flow/w2fe.hpp"
#include "w2flow_tools/experiments.hpp"

using namespace w2flow;
using namespace w2flow::tools;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  double budget_s;  // <= 0 means no runtime limit
  std::function<Outcome()> body;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

constexpr int kInstances = 10;
constexpr int kN = 50;
const std::vector<double> kDecayTimes{0, 0.1, 0.5, 1, 2, 5};
const std::vector<std::pair<double, double>> kSpeedPairs{{0, 1}, {0, 0.5}, {0.5, 1}, {0.2, 0.3}, {0.1, 0.9}, {0.4, 0.4}};
const std::vector<double> kEps{0.5, 0.1, 0.01};

std::vector<FlowCurve> flow_instances() {
  std::vector<FlowCurve> out;
  for (int s = 0; s < kInstances; ++s) {
    const Instance inst = make_instance(static_cast<std::uint64_t>(s), kN, 2);
    out.push_back(build_flow(inst.mu0, inst.mud));
  }
  return out;
}

Outcome decay() {
  double worst = 0.0;
  for (const FlowCurve& c : flow_instances())
    for (const double t : kDecayTimes) worst = std::max(worst, decay_residual(c, t) / (1.0 + c.w2_0d()));
  return {worst <= 1e-9, fmt("max residual/(1+w2_0d) = %.3g", worst)};
}

Outcome speed() {
  double worst = 0.0;
  for (const FlowCurve& c : flow_instances())
    for (const auto& [s1, s2] : kSpeedPairs) worst = std::max(worst, geodesic_speed_residual(c, s1, s2) / (1.0 + c.w2_0d()));
  return {worst <= 1e-9, fmt("max residual/(1+w2_0d) = %.3g", worst)};
}

// Euler runs shared by criteria 3-5.
struct EulerRun {
  FlowCurve curve;
  EulerTrajectory traj;
};

std::vector<EulerRun>& euler_runs() {
  static std::vector<EulerRun> runs = [] {
    std::vector<EulerRun> r;
    for (int s = 0; s < kInstances; ++s) {
      const Instance inst = make_instance(static_cast<std::uint64_t>(s), kN, 2);
      FlowCurve curve = build_flow(inst.mu0, inst.mud);
      for (const double eps : kEps) r.push_back({curve, run_euler(inst.mu0, inst.mud, eps, 50)});
    }
    return r;
  }();
  return runs;
}

Outcome on_geodesic() {
  double worst = 0.0;
  for (const EulerRun& r : euler_runs())
    for (const double v : on_geodesic_residuals(r.traj, r.curve)) worst = std::max(worst, v / (1.0 + r.curve.w2_0d()));
  return {worst <= 1e-9, fmt("max residual/(1+w2_0d) = %.3g over %.0f runs x 50 steps", worst, double(euler_runs().size()))};
}

Outcome step_identity() {
  double worst = 0.0;
  for (const EulerRun& r : euler_runs())
    for (int n = 1; n <= r.traj.steps; ++n) worst = std::max(worst, step_distance_residual(r.traj, n));
  return {worst <= 1e-9, fmt("max residual = %.3g", worst)};
}

Outcome convergence() {
  std::vector<double> grid(40);
  for (int i = 0; i < 40; ++i) grid[static_cast<std::size_t>(i)] = 2.0 * i / 39.0;
  double worst_excess = -std::numeric_limits<double>::infinity();
  double worst_small = 0.0;
  for (const EulerRun& r : euler_runs()) {
    // Cover t = 2 with the piecewise-constant flow.
    const EulerTrajectory& traj = r.traj.horizon() > 2.0
                                      ? r.traj
                                      : run_euler(r.curve.source(), r.curve.target(), r.traj.eps,
                                                  static_cast<int>(std::ceil(2.0 / r.traj.eps)) + 1);
    const std::vector<double> dev = deviations(traj, r.curve, grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
      worst_excess = std::max(worst_excess, dev[i] - convergence_bound(grid[i], traj.eps, r.curve.w2_0d()));
    if (traj.eps == 0.01)
      worst_small = std::max(worst_small, *std::max_element(dev.begin(), dev.end()) / r.curve.w2_0d());
  }
  return {worst_excess <= 0.0 && worst_small <= 0.05,
          fmt("max(deviation - bound) = %.3g; sup at eps 0.01 = %.4g w2_0d", worst_excess, worst_small)};
}

Outcome energy_identity() {
  const std::vector<double> times{0, 0.1, 0.5, 1, 2, 5};
  double worst = 0.0;
  for (const FlowCurve& c : flow_instances())
    for (std::size_t i = 0; i < times.size(); ++i)
      for (std::size_t j = i + 1; j < times.size(); ++j)
        worst = std::max(worst, energy_identity_residual(c, times[i], times[j]));
  return {worst <= 1e-9, fmt("max residual = %.3g over 15 (s,t) pairs", worst)};
}

Outcome maximal_slope() {
  double worst = 0.0;
  for (const FlowCurve& c : flow_instances())
    for (const double t : {0.2, 1.0}) {
      const double rate = energy_rate_fd(c, t, 1e-4);
      const double slope = local_slope(flow_point(c, t), c.target());
      const double speed = metric_derivative_fd(c, t, 1e-5);
      const double predicted = -slope * speed;
      worst = std::max(worst, std::abs(rate - predicted) / std::abs(predicted));
    }
  return {worst <= 1e-3, fmt("max relative mismatch = %.3g", worst)};
}

Outcome equivalence() {
  double worst_k1 = 0.0;
  double min_k2 = std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Mlp g0 = mlp_new({2, 8, 2}, Activation::Tanh, seed * 2 + 1);
    const Mlp phi = mlp_new({2, 8, 1}, Activation::Tanh, seed * 2 + 2);
    Rng rng(seed + 100);
    const Matrix z = testing::random_points(16, 2, rng, 1.5);
    for (const double dt : {0.1, 0.5}) {
      worst_k1 = std::max(worst_k1, equivalence_residual(g0, phi, z, 0.05, dt, 1));
      min_k2 = std::min(min_k2, equivalence_residual(g0, phi, z, 0.05, dt, 2));
    }
  }
  return {worst_k1 <= 1e-8 && min_k2 > 1e-6, fmt("max K=1 residual = %.3g; min K=2 residual = %.3g", worst_k1, min_k2)};
}

Outcome solver_oracle() {
  Rng rng(2024);
  double perm_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(7));
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(3));
    const Matrix x = testing::random_points(n, d, rng, 2.0);
    const Matrix y = testing::random_points(n, d, rng, 2.0);
    const double oracle = testing::brute_force_assignment_cost(x, y) / static_cast<double>(n);
    const AssignmentSolution sol = solve_assignment(uniform_cloud(x), uniform_cloud(y));
    perm_err = std::max(perm_err, std::abs(sol.w2 * sol.w2 - oracle) / (1.0 + oracle));
  }
  // Integer coordinates keep every sum exact, so equality is bitwise.
  int sorted_mismatch = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(40));
    Matrix x(n, 1), y(n, 1);
    std::vector<double> a, b;
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = static_cast<double>(rng.below(201)) - 100.0;
      y(i, 0) = static_cast<double>(rng.below(201)) - 100.0;
      a.push_back(x(i, 0));
      b.push_back(y(i, 0));
    }
    const Assignment match = solve_assignment(uniform_cloud(x), uniform_cloud(y)).assignment;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double step = x(i, 0) - y(match.sigma[static_cast<std::size_t>(i)], 0);
      total += step * step;
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double sorted_total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sorted_total += (a[i] - b[i]) * (a[i] - b[i]);
    if (total != sorted_total) ++sorted_mismatch;
  }
  double worst_gap = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(10));
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.below(10));
    const ParticleCloud a(testing::random_points(n, 2, rng, 2.0), testing::random_simplex(n, rng));
    const ParticleCloud b(testing::random_points(m, 2, rng, 2.0), testing::random_simplex(m, rng));
    const TransportSolution sol = solve_exact(a, b);
    worst_gap = std::max(worst_gap, std::abs(duality_gap(sol.plan, sol.potentials, cost_matrix(a, b, 2, true))));
  }
  return {perm_err <= 1e-12 && sorted_mismatch == 0 && worst_gap <= 1e-8,
          fmt("permutation rel err %.3g; sorted mismatches %.0f; max duality gap %.3g", perm_err, sorted_mismatch,
              worst_gap)};
}

Outcome gradients() {
  using testing::central_difference;
  using testing::relative_error;
  double worst = 0.0;
  const double h = 1e-6;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Activation act = seed % 2 == 0 ? Activation::Tanh : Activation::Identity;
    Rng rng(seed + 500);
    const int in = 2 + static_cast<int>(seed % 3);
    const Matrix x = testing::random_points(6, in, rng, 1.5);

    // Vector head: mse loss.
    const Mlp g = mlp_new({in, 7, 5, 3}, act, seed);
    const Matrix targets = testing::random_points(6, 3, rng, 1.0);
    const Vector theta = g.parameters();
    auto mse_at = [&](const Vector& p) {
      Mlp probe = g;
      probe.set_parameters(p);
      return mse_loss_grad(probe, x, targets).value;
    };
    worst = std::max(worst, relative_error(mse_loss_grad(g, x, targets).grad, central_difference(mse_at, theta, h)));
    const Matrix out_grad = -2.0 / 6.0 * (targets - g.forward(x));
    const Matrix dx = g.backward(x, out_grad).inputs;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      auto mse_x = [&](const Vector& xi) {
        Matrix probe = x;
        probe.row(i) = xi.transpose();
        return (targets - g.forward(probe)).rowwise().squaredNorm().mean();
      };
      worst = std::max(worst, relative_error(dx.row(i).transpose(), central_difference(mse_x, x.row(i).transpose(), h)));
    }

    // Scalar head: mean potential value.
    const Mlp phi = mlp_new({in, 9, 1}, act, seed + 1000);
    const Vector w = phi.parameters();
    auto head_at = [&](const Vector& p) {
      Mlp probe = phi;
      probe.set_parameters(p);
      return probe.forward(x).mean();
    };
    worst = std::max(worst, relative_error(scalar_head_grad(phi, x).grad, central_difference(head_at, w, h)));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      auto phi_x = [&](const Vector& xi) { return phi.forward(xi.transpose())(0, 0); };
      worst = std::max(worst, relative_error(input_gradient(phi, x.row(i).transpose()),
                                             central_difference(phi_x, x.row(i).transpose(), h)));
    }
  }
  return {worst <= 1e-4, fmt("max relative error = %.3g over 20 nets", worst)};
}

Outcome ring() {
  ExperimentConfig cfg = default_config(Scenario::Ring);
  cfg.out_dir = (fs::temp_directory_path() / "w2flow_acceptance_ring").string();
  fs::remove_all(cfg.out_dir);
  const ScenarioReport report = run_ring(cfg);
  std::map<int, double> med;
  std::ifstream in(fs::path(cfg.out_dir) / "median_epochs.csv");
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string k, v;
    std::getline(ss, k, ',');
    std::getline(ss, v);
    med[std::stoi(k)] = std::stod(v);
  }
  auto finite = [](double v) { return v >= 0.0 ? v : std::numeric_limits<double>::infinity(); };
  const double k1 = finite(med.at(1)), k5 = finite(med.at(5)), k10 = finite(med.at(10));
  const bool ordered = k5 < k1 && k10 <= k5 + 10.0;
  return {ordered && report.pass(), fmt("median epochs K1 %.0f, K5 %.0f, K10 %.0f", k1, k5, k10)};
}

Outcome direct_particle() {
  Rng rng(77);
  const Matrix data = (testing::random_points(32, 2, rng, 2.0).rowwise() + Eigen::RowVector2d(3.0, 1.0)).eval();
  TrainConfig cfg;
  cfg.m = 32;
  cfg.delta_t = 0.15;
  cfg.seed = 9;
  cfg.potential_backend = PotentialSource::ExactOt;
  cfg.generator_mode = GeneratorMode::DirectParticle;
  W2feTrainer trainer(cfg, gaussian_sampler({Vector::Zero(2), Matrix::Identity(2, 2)}), uniform_cloud(data));
  const EulerTrajectory ref = run_euler(uniform_cloud(trainer.particles()), uniform_cloud(data), cfg.delta_t, 20);
  double worst = 0.0;
  for (int n = 1; n <= 20; ++n) {
    trainer.run_epoch();
    worst = std::max(worst, (trainer.particles() - ref.snapshots[static_cast<std::size_t>(n)].points()).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-12, fmt("max coordinate difference = %.3g over 20 steps", worst)};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "exponential decay of W2 along the flow", 10, decay},
      {2, "constant-speed geodesic", 0, speed},
      {3, "Euler snapshots lie on the flow", 60, on_geodesic},
      {4, "Euler step distance identity", 0, step_identity},
      {5, "Euler convergence bound", 0, convergence},
      {6, "energy identity", 0, energy_identity},
      {7, "maximal slope", 0, maximal_slope},
      {8, "W2-FE / W2-GAN update equivalence", 10, equivalence},
      {9, "OT solver oracles", 0, solver_oracle},
      {10, "network gradients", 0, gradients},
      {11, "ring training: persistency K ordering", 900, ring},
      {12, "direct-particle training equals Euler", 0, direct_particle},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0 && secs >= c.budget_s) {
      o.pass = false;
      o.detail += fmt("; over the %.0f s budget", c.budget_s);
    }
    if (!o.pass) ++failures;
    std::printf("criterion %2d %s: %s (%s) [%.2f s]\n", c.id, o.pass ? "PASS" : "FAIL", c.title, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
