#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "w2flow/ot.hpp"

namespace w2flow {

CostMatrix cost_matrix(const ParticleCloud& source, const ParticleCloud& target, int exponent, bool half) {
  if (source.dim() != target.dim())
    throw Error("dimension mismatch: " + std::to_string(source.dim()) + " vs " + std::to_string(target.dim()));
  if (exponent != 1 && exponent != 2) throw Error("cost exponent must be 1 or 2");

  CostMatrix out;
  out.exponent = exponent;
  out.half = half;
  out.entries.resize(source.size(), target.size());
  const double factor = half ? 0.5 : 1.0;
  for (Eigen::Index j = 0; j < target.size(); ++j) {
    for (Eigen::Index i = 0; i < source.size(); ++i) {
      const double sq = (source.point(i) - target.point(j)).squaredNorm();
      out.entries(i, j) = factor * (exponent == 2 ? sq : std::sqrt(sq));
    }
  }
  return out;
}

void DualPotentials::normalize() {
  if (phi.size() == 0) return;
  const double shift = phi[0];
  phi.array() -= shift;
  psi.array() += shift;
}

TransportSolution solve_exact(const ParticleCloud& source, const ParticleCloud& target, int exponent) {
  const CostMatrix half_cost = cost_matrix(source, target, exponent, true);
  const double mass_gap = source.weights().sum() - target.weights().sum();
  if (std::abs(mass_gap) > 1e-9) throw Error("infeasible weights: mass mismatch " + std::to_string(mass_gap));

  TransportSolution out;
  if (source.size() == target.size() && source.is_uniform() && target.is_uniform()) {
    const LinearAssignment lap = solve_linear_assignment(half_cost.entries);
    const double w = 1.0 / static_cast<double>(source.size());
    out.plan.coupling = Matrix::Zero(source.size(), target.size());
    for (Eigen::Index i = 0; i < source.size(); ++i)
      out.plan.coupling(i, lap.assignment.sigma[static_cast<std::size_t>(i)]) = w;
    out.potentials = {lap.row_potential, lap.col_potential};
  } else {
    TransportLp lp = solve_transport_lp(source.weights(), target.weights(), half_cost.entries);
    out.plan.coupling = std::move(lp.flow);
    out.potentials = {std::move(lp.u), std::move(lp.v)};
  }
  out.potentials.normalize();
  out.cost = 2.0 * (out.plan.coupling.array() * half_cost.entries.array()).sum();
  return out;
}

Vector c_transform(const Vector& phi, const ParticleCloud& source, const ParticleCloud& target) {
  if (phi.size() != source.size()) throw Error("c_transform: phi length does not match source support");
  if (!phi.allFinite()) throw Error("c_transform: phi must be finite");
  const CostMatrix c = cost_matrix(source, target, 2, true);
  Vector psi(target.size());
  for (Eigen::Index j = 0; j < target.size(); ++j) psi[j] = (c.entries.col(j) - phi).minCoeff();
  return psi;
}

Matrix potential_gradient(const ParticleCloud& source, const Assignment& matching, const ParticleCloud& target) {
  if (source.dim() != target.dim()) throw Error("potential_gradient: dimension mismatch");
  if (matching.size() != source.size()) throw Error("potential_gradient: matching size does not match source");
  Matrix grad(source.size(), source.dim());
  for (Eigen::Index i = 0; i < source.size(); ++i) {
    const Eigen::Index j = matching.sigma[static_cast<std::size_t>(i)];
    if (j < 0 || j >= target.size()) throw Error("potential_gradient: matching index out of range");
    grad.row(i) = source.point(i) - target.point(j);
  }
  return grad;
}

Matrix potential_gradient(const ParticleCloud& source, const TransportPlan& plan, const ParticleCloud& target) {
  if (source.dim() != target.dim()) throw Error("potential_gradient: dimension mismatch");
  if (plan.coupling.rows() != source.size() || plan.coupling.cols() != target.size())
    throw Error("potential_gradient: plan shape does not match clouds");
  Matrix grad(source.size(), source.dim());
  for (Eigen::Index i = 0; i < source.size(); ++i) {
    const double mass = plan.coupling.row(i).sum();
    if (!(mass > 0.0)) throw Error("potential_gradient: empty row mass at source point " + std::to_string(i));
    const Eigen::RowVectorXd barycenter = plan.coupling.row(i) * target.points() / mass;
    grad.row(i) = source.point(i) - barycenter;
  }
  return grad;
}

double max_dual_violation(const DualPotentials& potentials, const CostMatrix& cost) {
  const Matrix slack =
      (potentials.phi.replicate(1, cost.entries.cols()) + potentials.psi.transpose().replicate(cost.entries.rows(), 1)) -
      cost.entries;
  return slack.maxCoeff();
}

double duality_gap(const TransportPlan& plan, const DualPotentials& potentials, const CostMatrix& cost) {
  if (!cost.half) throw Error("duality_gap expects the half-cost convention");
  if (plan.coupling.rows() != cost.entries.rows() || plan.coupling.cols() != cost.entries.cols() ||
      potentials.phi.size() != cost.entries.rows() || potentials.psi.size() != cost.entries.cols())
    throw Error("duality_gap: inconsistent shapes");
  const double primal = (plan.coupling.array() * cost.entries.array()).sum();
  const double violation = std::max(0.0, max_dual_violation(potentials, cost));
  const Vector a = plan.source_marginal();
  const Vector b = plan.target_marginal();
  const double dual = a.dot(potentials.phi) + b.dot(potentials.psi) - violation * b.sum();
  return primal - dual;
}

double wasserstein(const ParticleCloud& a, const ParticleCloud& b, int exponent) {
  const double cost = solve_exact(a, b, exponent).cost;
  const double clamped = std::max(0.0, cost);
  return exponent == 2 ? std::sqrt(clamped) : clamped;
}

void write_plan_csv(const TransportPlan& plan, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write plan file: " + path);
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "i,j,mass\n";
  for (Eigen::Index i = 0; i < plan.coupling.rows(); ++i)
    for (Eigen::Index j = 0; j < plan.coupling.cols(); ++j)
      if (plan.coupling(i, j) > 0.0) out << i << ',' << j << ',' << plan.coupling(i, j) << '\n';
  if (!out) throw Error("write failed: " + path);
}

}  // namespace w2flow
