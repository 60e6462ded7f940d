#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "w2flow/ot.hpp"

// Transportation simplex (MODI / stepping-stone form of network simplex on a
// complete bipartite graph). The basis is a spanning tree over the n row
// nodes and m column nodes with exactly n + m - 1 basic cells, possibly some
// carrying zero flow.

namespace w2flow {
namespace {

struct Cell {
  Eigen::Index row;
  Eigen::Index col;
  double flow;
};

class TransportSimplex {
 public:
  TransportSimplex(const Vector& supply, const Vector& demand, const Matrix& cost)
      : n_(supply.size()), m_(demand.size()), supply_(supply), demand_(demand), cost_(cost) {
    const double scale = std::max(1.0, cost_.cwiseAbs().maxCoeff());
    tol_ = 1e-12 * scale;
    north_west_corner();
  }

  TransportLp run() {
    const long max_pivots = 200L * (n_ + m_) * (n_ + m_) + 1000;
    long degenerate_run = 0;
    int pivots = 0;
    for (;;) {
      compute_potentials();
      const bool cyclic_scan = degenerate_run > 4 * (n_ + m_);
      const auto entering = find_entering(cyclic_scan);
      if (!entering) break;
      if (pivots >= max_pivots) throw Error("transportation simplex exceeded its pivot budget");
      const double theta = pivot(entering->first, entering->second);
      degenerate_run = theta > 0.0 ? 0 : degenerate_run + 1;
      ++pivots;
    }

    TransportLp out;
    out.flow = Matrix::Zero(n_, m_);
    for (const Cell& c : basis_) out.flow(c.row, c.col) += c.flow;
    out.u = u_;
    out.v = v_;
    out.objective = (out.flow.array() * cost_.array()).sum();
    out.pivots = pivots;
    return out;
  }

 private:
  void north_west_corner() {
    basis_.reserve(static_cast<std::size_t>(n_ + m_ - 1));
    Eigen::Index i = 0;
    Eigen::Index j = 0;
    double s = supply_[0];
    double d = demand_[0];
    for (;;) {
      const double x = std::min(s, d);
      basis_.push_back({i, j, x});
      s -= x;
      d -= x;
      if (i == n_ - 1 && j == m_ - 1) break;
      if ((s <= d && i < n_ - 1) || j == m_ - 1) {
        ++i;
        s = supply_[i];
      } else {
        ++j;
        d = demand_[j];
      }
    }
  }

  // Node ids: rows 0..n-1, columns n..n+m-1.
  void build_adjacency() {
    adjacency_.assign(static_cast<std::size_t>(n_ + m_), {});
    for (std::size_t k = 0; k < basis_.size(); ++k) {
      adjacency_[static_cast<std::size_t>(basis_[k].row)].push_back(k);
      adjacency_[static_cast<std::size_t>(n_ + basis_[k].col)].push_back(k);
    }
  }

  void compute_potentials() {
    build_adjacency();
    u_ = Vector::Constant(n_, std::numeric_limits<double>::quiet_NaN());
    v_ = Vector::Constant(m_, std::numeric_limits<double>::quiet_NaN());
    std::vector<char> seen(static_cast<std::size_t>(n_ + m_), 0);
    std::vector<Eigen::Index> stack{0};
    u_[0] = 0.0;
    seen[0] = 1;
    while (!stack.empty()) {
      const Eigen::Index node = stack.back();
      stack.pop_back();
      for (const std::size_t k : adjacency_[static_cast<std::size_t>(node)]) {
        const Cell& c = basis_[k];
        const Eigen::Index other = node < n_ ? n_ + c.col : c.row;
        if (seen[static_cast<std::size_t>(other)]) continue;
        seen[static_cast<std::size_t>(other)] = 1;
        if (node < n_) {
          v_[c.col] = cost_(c.row, c.col) - u_[c.row];
        } else {
          u_[c.row] = cost_(c.row, c.col) - v_[c.col];
        }
        stack.push_back(other);
      }
    }
    if (!u_.allFinite() || !v_.allFinite()) throw Error("transportation simplex basis is not a spanning tree");
  }

  std::optional<std::pair<Eigen::Index, Eigen::Index>> find_entering(bool cyclic_scan) {
    double best = -tol_;
    std::optional<std::pair<Eigen::Index, Eigen::Index>> found;
    const Eigen::Index total = n_ * m_;
    for (Eigen::Index k = 0; k < total; ++k) {
      const Eigen::Index idx = cyclic_scan ? (scan_start_ + k) % total : k;
      const Eigen::Index i = idx / m_;
      const Eigen::Index j = idx % m_;
      const double reduced = cost_(i, j) - u_[i] - v_[j];
      if (reduced < best) {
        best = reduced;
        found = {{i, j}};
        if (cyclic_scan) {
          scan_start_ = (idx + 1) % total;
          break;
        }
      }
    }
    return found;
  }

  // Adds (row, col) to the basis, pushes flow around the unique cycle and
  // drops the blocking cell. Returns the amount of flow moved.
  double pivot(Eigen::Index row, Eigen::Index col) {
    const std::size_t nodes = static_cast<std::size_t>(n_ + m_);
    std::vector<std::ptrdiff_t> parent_edge(nodes, -1);
    std::vector<char> seen(nodes, 0);
    std::vector<Eigen::Index> queue{row};
    seen[static_cast<std::size_t>(row)] = 1;
    const Eigen::Index goal = n_ + col;
    for (std::size_t head = 0; head < queue.size() && !seen[static_cast<std::size_t>(goal)]; ++head) {
      const Eigen::Index node = queue[head];
      for (const std::size_t k : adjacency_[static_cast<std::size_t>(node)]) {
        const Cell& c = basis_[k];
        const Eigen::Index other = node < n_ ? n_ + c.col : c.row;
        if (seen[static_cast<std::size_t>(other)]) continue;
        seen[static_cast<std::size_t>(other)] = 1;
        parent_edge[static_cast<std::size_t>(other)] = static_cast<std::ptrdiff_t>(k);
        queue.push_back(other);
      }
    }

    // Walk from the entering column back to the entering row; edges alternate
    // -, +, -, ... starting next to the column.
    std::vector<std::size_t> path;
    for (Eigen::Index node = goal; node != row;) {
      const auto k = static_cast<std::size_t>(parent_edge[static_cast<std::size_t>(node)]);
      path.push_back(k);
      node = node < n_ ? n_ + basis_[k].col : basis_[k].row;
    }

    double theta = std::numeric_limits<double>::infinity();
    std::size_t leaving = path.front();
    for (std::size_t p = 0; p < path.size(); p += 2) {
      if (basis_[path[p]].flow < theta) {
        theta = basis_[path[p]].flow;
        leaving = path[p];
      }
    }
    for (std::size_t p = 0; p < path.size(); ++p) {
      Cell& c = basis_[path[p]];
      c.flow += (p % 2 == 0) ? -theta : theta;
      if (c.flow < 0.0) c.flow = 0.0;
    }
    basis_[leaving] = {row, col, theta};
    return theta;
  }

  Eigen::Index n_;
  Eigen::Index m_;
  const Vector& supply_;
  const Vector& demand_;
  const Matrix& cost_;
  double tol_ = 0.0;
  std::vector<Cell> basis_;
  std::vector<std::vector<std::size_t>> adjacency_;
  Vector u_;
  Vector v_;
  Eigen::Index scan_start_ = 0;
};

}  // namespace

TransportLp solve_transport_lp(const Vector& supply, const Vector& demand, const Matrix& cost) {
  if (supply.size() == 0 || demand.size() == 0) throw Error("transport problem needs non-empty marginals");
  if (cost.rows() != supply.size() || cost.cols() != demand.size())
    throw Error("transport cost shape does not match marginals");
  if (!cost.allFinite() || !supply.allFinite() || !demand.allFinite())
    throw Error("transport problem has non-finite data");
  if ((supply.array() < 0.0).any() || (demand.array() < 0.0).any())
    throw Error("transport marginals must be non-negative");
  const double ms = supply.sum();
  const double md = demand.sum();
  if (std::abs(ms - md) > 1e-9) throw Error("infeasible transport problem: mass mismatch " + std::to_string(ms - md));

  // Absorb the admissible mismatch into the demand so the corner rule closes.
  const Vector balanced = demand * (ms / md);
  TransportSimplex solver(supply, balanced, cost);
  return solver.run();
}

}  // namespace w2flow
