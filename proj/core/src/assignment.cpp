#include <cmath>
#include <limits>

#include "w2flow/ot.hpp"

namespace w2flow {

bool Assignment::is_bijection() const {
  std::vector<char> hit(sigma.size(), 0);
  for (const auto j : sigma) {
    if (j < 0 || j >= size() || hit[static_cast<std::size_t>(j)]) return false;
    hit[static_cast<std::size_t>(j)] = 1;
  }
  return true;
}

// Shortest augmenting path form of the Hungarian method with 1-based
// sentinel row/column 0. Rows are inserted one at a time; each insertion runs
// a Dijkstra-like scan over reduced costs and flips the augmenting path.
LinearAssignment solve_linear_assignment(const Matrix& cost) {
  const Eigen::Index n = cost.rows();
  if (n == 0 || cost.cols() != n) throw Error("linear assignment needs a non-empty square cost matrix");
  if (!cost.allFinite()) throw Error("linear assignment cost has non-finite entries");

  constexpr double kInf = std::numeric_limits<double>::infinity();
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = cost;
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<Eigen::Index> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);

  for (Eigen::Index i = 1; i <= n; ++i) {
    match[0] = i;
    Eigen::Index j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Eigen::Index i0 = match[j0];
      double delta = kInf;
      Eigen::Index j1 = 0;
      const double* row = rows.data() + (i0 - 1) * n;
      const double ui = u[i0];
      for (Eigen::Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double reduced = row[j - 1] - ui - v[j];
        if (reduced < minv[j]) {
          minv[j] = reduced;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const Eigen::Index j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  LinearAssignment out;
  out.assignment.sigma.assign(static_cast<std::size_t>(n), 0);
  out.row_potential.resize(n);
  out.col_potential.resize(n);
  for (Eigen::Index j = 1; j <= n; ++j) out.assignment.sigma[static_cast<std::size_t>(match[j] - 1)] = j - 1;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row_potential[i] = u[i + 1];
    out.col_potential[i] = v[i + 1];
    out.total_cost += cost(i, out.assignment.sigma[static_cast<std::size_t>(i)]);
  }
  return out;
}

AssignmentSolution solve_assignment(const ParticleCloud& source, const ParticleCloud& target) {
  if (source.size() != target.size() || !source.is_uniform() || !target.is_uniform())
    throw Error("assignment requires uniform clouds of equal size; use solve_exact");
  const CostMatrix cost = cost_matrix(source, target, 2, false);
  LinearAssignment lap = solve_linear_assignment(cost.entries);
  AssignmentSolution out;
  out.w2 = std::sqrt(std::max(0.0, lap.total_cost) / static_cast<double>(source.size()));
  out.assignment = std::move(lap.assignment);
  return out;
}

}  // namespace w2flow
