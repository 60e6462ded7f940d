#pragma once

#include <string>
#include <vector>

#include "w2flow/measures.hpp"

namespace w2flow {

/// Pairwise ground cost between two supports.
///
/// entries(i, j) = (half ? 1/2 : 1) * |x_i - y_j|^exponent. Distances are
/// reported with half = false; Kantorovich potentials live in the half = true
/// convention so that grad(phi)(x) = x - T(x) without a factor 2.
struct CostMatrix {
  Matrix entries;
  int exponent = 2;
  bool half = false;
};

/// Throws on dimension mismatch or an exponent other than 1 or 2.
CostMatrix cost_matrix(const ParticleCloud& source, const ParticleCloud& target, int exponent, bool half);

/// Permutation source i -> target sigma[i].
struct Assignment {
  std::vector<Eigen::Index> sigma;

  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(sigma.size()); }
  bool is_bijection() const;
};

/// Discrete coupling; coupling(i, j) is the mass moved from source i to target j.
struct TransportPlan {
  Matrix coupling;

  Vector source_marginal() const { return coupling.rowwise().sum(); }
  Vector target_marginal() const { return coupling.colwise().sum().transpose(); }
};

/// Kantorovich pair on the two supports. Defined up to (phi + a, psi - a);
/// normalize() fixes the gauge phi[0] = 0.
struct DualPotentials {
  Vector phi;
  Vector psi;

  void normalize();
};

/// Square linear assignment problem solved exactly by shortest augmenting
/// paths (Jonker-Volgenant / Kuhn-Munkres family, O(n^3)).
///
/// Returns the minimizing permutation together with dual variables satisfying
/// row[i] + col[j] <= cost(i, j), with equality on matched pairs. Ties are
/// broken toward the lowest column index.
struct LinearAssignment {
  Assignment assignment;
  Vector row_potential;
  Vector col_potential;
  double total_cost = 0.0;
};
LinearAssignment solve_linear_assignment(const Matrix& cost);

struct AssignmentSolution {
  Assignment assignment;
  /// sqrt(sum_i |x_i - y_sigma(i)|^2 / n)
  double w2 = 0.0;
};

/// Exact W2 matching for two uniform clouds of equal size.
/// Throws "use solve_exact" otherwise.
AssignmentSolution solve_assignment(const ParticleCloud& source, const ParticleCloud& target);

/// Result of an exact or entropic transport solve.
///
/// cost is the un-halved total sum_ij gamma_ij |x_i - y_j|^p, so W_p = cost^(1/p).
/// potentials are for the half cost c = |x - y|^p / 2.
struct TransportSolution {
  TransportPlan plan;
  DualPotentials potentials;
  double cost = 0.0;
};

/// Exact discrete OT between arbitrary weighted clouds. Uniform equal-size
/// inputs go through solve_linear_assignment, everything else through the
/// transportation simplex. Throws if the total masses differ by more than 1e-9.
TransportSolution solve_exact(const ParticleCloud& source, const ParticleCloud& target, int exponent = 2);

/// Transportation simplex on explicit marginals and cost. Potentials satisfy
/// u_i + v_j <= cost(i, j) + tol with equality on the basis.
struct TransportLp {
  Matrix flow;
  Vector u;
  Vector v;
  double objective = 0.0;
  int pivots = 0;
};
TransportLp solve_transport_lp(const Vector& supply, const Vector& demand, const Matrix& cost);

struct SinkhornOptions {
  double epsilon = 1e-2;
  int max_iters = 10000;
  double tol = 1e-9;
  int exponent = 2;
};

struct SinkhornSolution : TransportSolution {
  int iterations = 0;
  /// L1 violation of the source marginal at exit.
  double marginal_error = 0.0;
  bool converged = false;
};

/// Log-domain Sinkhorn on the half cost with regularization strength
/// options.epsilon. Non-convergence is reported through `converged`.
SinkhornSolution sinkhorn(const ParticleCloud& source, const ParticleCloud& target,
                          const SinkhornOptions& options);

/// psi[j] = min_i { |x_i - y_j|^2 / 2 - phi[i] }
Vector c_transform(const Vector& phi, const ParticleCloud& source, const ParticleCloud& target);

/// Rows x_i - T(x_i): T(x_i) = y_sigma(i) for a permutation.
Matrix potential_gradient(const ParticleCloud& source, const Assignment& matching, const ParticleCloud& target);

/// Rows x_i - T(x_i) with T the barycentric projection of the plan. Throws
/// when a source row carries no mass.
Matrix potential_gradient(const ParticleCloud& source, const TransportPlan& plan, const ParticleCloud& target);

/// primal(plan) - dual(potentials) under a half cost.
///
/// The dual is evaluated with the plan's marginals after shifting psi down by
/// the largest feasibility violation max(0, max_ij phi_i + psi_j - c_ij), so
/// it is a valid lower bound and the gap is non-negative for any feasible plan.
double duality_gap(const TransportPlan& plan, const DualPotentials& potentials, const CostMatrix& cost);

/// Largest phi_i + psi_j - c_ij over all pairs (non-positive when feasible).
double max_dual_violation(const DualPotentials& potentials, const CostMatrix& cost);

/// W_p between two clouds by an exact solve.
double wasserstein(const ParticleCloud& a, const ParticleCloud& b, int exponent = 2);

/// Plan as `i,j,mass` triplets for every strictly positive entry.
void write_plan_csv(const TransportPlan& plan, const std::string& path);

}  // namespace w2flow
