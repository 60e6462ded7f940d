#include <cmath>
#include <limits>

#include "w2flow/ot.hpp"

namespace w2flow {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Marginal check cadence; the check costs as much as a full iteration.
constexpr int kCheckEvery = 10;

double log_sum_exp(const Vector& x) {
  const double c = x.maxCoeff();
  if (c == kNegInf) return kNegInf;
  return c + std::log((x.array() - c).exp().sum());
}

Vector safe_log(const Vector& w) {
  return w.unaryExpr([](double x) { return x > 0.0 ? std::log(x) : kNegInf; });
}

}  // namespace

SinkhornSolution sinkhorn(const ParticleCloud& source, const ParticleCloud& target,
                          const SinkhornOptions& options) {
  if (!(options.epsilon > 0.0) || !std::isfinite(options.epsilon))
    throw Error("sinkhorn: entropic epsilon must be positive");
  if (options.max_iters < 1) throw Error("sinkhorn: max_iters must be at least 1");
  const CostMatrix half_cost = cost_matrix(source, target, options.exponent, true);
  const Matrix& c = half_cost.entries;
  const double eps = options.epsilon;
  const Eigen::Index n = c.rows();
  const Eigen::Index m = c.cols();

  const Vector log_a = safe_log(source.weights());
  const Vector log_b = safe_log(target.weights());
  Vector f = Vector::Zero(n);
  Vector g = Vector::Zero(m);
  Vector scratch_m(m);
  Vector scratch_n(n);

  SinkhornSolution out;
  Matrix log_plan(n, m);
  for (int it = 1; it <= options.max_iters; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      scratch_m = (g - c.row(i).transpose()) / eps + log_b;
      f[i] = -eps * log_sum_exp(scratch_m);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      scratch_n = (f - c.col(j)) / eps + log_a;
      g[j] = -eps * log_sum_exp(scratch_n);
    }
    out.iterations = it;
    if (it % kCheckEvery != 0 && it != options.max_iters) continue;
    for (Eigen::Index j = 0; j < m; ++j)
      log_plan.col(j) = (f.array() + g[j] - c.col(j).array()) / eps + log_a.array() + log_b[j];
    const Vector row_mass = log_plan.array().exp().rowwise().sum();
    out.marginal_error = (row_mass - source.weights()).cwiseAbs().sum();
    if (out.marginal_error < options.tol) {
      out.converged = true;
      break;
    }
  }

  out.plan.coupling = log_plan.array().exp();
  out.potentials = {f, g};
  out.potentials.normalize();
  out.cost = 2.0 * (out.plan.coupling.array() * c.array()).sum();
  return out;
}

}  // namespace w2flow
