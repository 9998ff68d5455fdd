#include "protoextract/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <string>

#include "protoextract/errors.hpp"

namespace protoextract {

Point DiscreteDistribution::mean() const {
  Point m(dim(), 0.0);
  for (std::size_t j = 0; j < size(); ++j) {
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += weights[j] * support[j][k];
  }
  return m;
}

void DiscreteDistribution::validate() const {
  if (support.empty()) throw InvalidArgument("distribution: empty support");
  if (support.size() != weights.size()) {
    throw InvalidArgument("distribution: support/weights length mismatch (" +
                          std::to_string(support.size()) + " vs " +
                          std::to_string(weights.size()) + ")");
  }
  const std::size_t d = support.front().size();
  if (d == 0) throw InvalidArgument("distribution: zero-dimensional point");
  for (const Point& p : support) {
    if (p.size() != d) throw DimensionMismatch("distribution: mixed point dimensions");
    if (!all_finite(p)) throw InvalidArgument("distribution: non-finite support point");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w)) throw InvalidArgument("distribution: non-finite weight");
    if (w <= 0.0) throw InvalidArgument("distribution: weight must be > 0, got " + std::to_string(w));
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw InvalidArgument("distribution: weights sum to " + std::to_string(sum) + ", expected 1");
  }
}

DiscreteDistribution DiscreteDistribution::make(std::vector<Point> support,
                                                std::vector<double> weights) {
  DiscreteDistribution d{std::move(support), std::move(weights)};
  d.validate();
  return d;
}

DiscreteDistribution DiscreteDistribution::uniform(std::vector<Point> support) {
  if (support.empty()) throw InvalidArgument("distribution: empty support");
  std::vector<double> w(support.size(), 1.0 / static_cast<double>(support.size()));
  return make(std::move(support), std::move(w));
}

DiscreteDistribution DiscreteDistribution::dirac(Point x) {
  return make({std::move(x)}, {1.0});
}

std::vector<double> TransportPlan::row_sums() const {
  std::vector<double> r(n_src, 0.0);
  for (std::size_t i = 0; i < n_src; ++i) {
    for (std::size_t j = 0; j < n_dst; ++j) r[i] += flow[i * n_dst + j];
  }
  return r;
}

std::vector<double> TransportPlan::col_sums() const {
  std::vector<double> c(n_dst, 0.0);
  for (std::size_t i = 0; i < n_src; ++i) {
    for (std::size_t j = 0; j < n_dst; ++j) c[j] += flow[i * n_dst + j];
  }
  return c;
}

namespace {

// Transportation simplex on the complete bipartite graph. Nodes 0..n-1 are
// sources, n..n+m-1 sinks; the basis is a spanning tree of n+m-1 arcs.
class TransportSimplex {
 public:
  TransportSimplex(const std::vector<double>& supply, const std::vector<double>& demand,
                   const std::vector<double>& cost)
      : n_(static_cast<int>(supply.size())),
        m_(static_cast<int>(demand.size())),
        supply_(supply),
        demand_(demand),
        cost_(cost) {
    double max_c = 0.0;
    for (double c : cost_) max_c = std::max(max_c, c);
    enter_tol_ = 1e-12 * (1.0 + max_c);
  }

  void run() {
    northwest_corner();
    const long max_pivots = 2000 + 64L * static_cast<long>(n_) * static_cast<long>(m_);
    long degenerate_streak = 0;
    bool bland = false;
    for (long pivot = 0; pivot < max_pivots; ++pivot) {
      build_tree();
      compute_potentials();
      int ei = -1, ej = -1;
      if (!find_entering(bland, &ei, &ej)) return;  // dual feasible: optimal
      const double theta = pivot_on(ei, ej);
      if (theta <= 1e-15) {
        // Degenerate pivots are normal with uniform weights; a long stall
        // switches to Bland's rule, which cannot cycle.
        if (++degenerate_streak > 16L * static_cast<long>(n_ + m_)) bland = true;
      } else {
        degenerate_streak = 0;
      }
    }
    throw NumericFailure("transport simplex: pivot limit exceeded");
  }

  std::vector<double> dense_flow() const {
    std::vector<double> g(static_cast<std::size_t>(n_) * m_, 0.0);
    for (const BasicArc& a : basis_) g[a.src * m_ + a.dst] = std::max(a.flow, 0.0);
    return g;
  }

 private:
  struct BasicArc {
    int src;      // source index in [0, n)
    int dst;      // sink index in [0, m)
    double flow;  // >= 0 (zero on degenerate basis arcs)
  };

  void northwest_corner() {
    std::vector<double> a = supply_;
    std::vector<double> b = demand_;
    basis_.clear();
    basis_.reserve(n_ + m_ - 1);
    int i = 0, j = 0;
    while (true) {
      const double f = std::max(0.0, std::min(a[i], b[j]));
      basis_.push_back({i, j, f});
      if (i == n_ - 1 && j == m_ - 1) break;
      // Exhaust the smaller side; at a boundary the only legal move remains.
      if (j == m_ - 1 || (a[i] < b[j] && i < n_ - 1)) {
        b[j] -= a[i];
        a[i] = 0.0;
        ++i;
      } else {
        a[i] -= b[j];
        b[j] = 0.0;
        ++j;
      }
    }
  }

  void build_tree() {
    adj_.assign(n_ + m_, {});
    for (std::size_t t = 0; t < basis_.size(); ++t) {
      adj_[basis_[t].src].push_back(static_cast<int>(t));
      adj_[n_ + basis_[t].dst].push_back(static_cast<int>(t));
    }
  }

  void compute_potentials() {
    u_.assign(n_, 0.0);
    v_.assign(m_, 0.0);
    std::vector<char> seen(n_ + m_, 0);
    std::queue<int> bfs;
    bfs.push(0);
    seen[0] = 1;
    while (!bfs.empty()) {
      const int node = bfs.front();
      bfs.pop();
      for (int t : adj_[node]) {
        const BasicArc& arc = basis_[t];
        const int other = (node == arc.src) ? n_ + arc.dst : arc.src;
        if (seen[other]) continue;
        seen[other] = 1;
        if (other >= n_) {
          v_[other - n_] = cost_[arc.src * m_ + arc.dst] - u_[arc.src];
        } else {
          u_[other] = cost_[arc.src * m_ + arc.dst] - v_[arc.dst];
        }
        bfs.push(other);
      }
    }
  }

  bool find_entering(bool bland, int* ei, int* ej) const {
    double best = -enter_tol_;
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < m_; ++j) {
        const double rc = cost_[i * m_ + j] - u_[i] - v_[j];
        if (rc < best) {
          best = rc;
          *ei = i;
          *ej = j;
          if (bland) return true;  // lowest (i,j) with negative reduced cost
        }
      }
    }
    return *ei >= 0 && best < -enter_tol_;
  }

  // Pivot on entering arc (ei, ej): push theta around the unique tree cycle,
  // remove the limiting arc, insert the entering arc. Returns theta.
  double pivot_on(int ei, int ej) {
    // Tree path from node ei to node n_+ej.
    std::vector<int> parent_node(n_ + m_, -1), parent_arc(n_ + m_, -1);
    std::vector<char> seen(n_ + m_, 0);
    std::queue<int> bfs;
    bfs.push(ei);
    seen[ei] = 1;
    const int target = n_ + ej;
    while (!bfs.empty() && !seen[target]) {
      const int node = bfs.front();
      bfs.pop();
      for (int t : adj_[node]) {
        const BasicArc& arc = basis_[t];
        const int other = (node == arc.src) ? n_ + arc.dst : arc.src;
        if (seen[other]) continue;
        seen[other] = 1;
        parent_node[other] = node;
        parent_arc[other] = t;
        bfs.push(other);
      }
    }
    if (!seen[target]) throw NumericFailure("transport simplex: basis lost connectivity");

    // Walking the path from ei, arcs at even positions lose theta and odd
    // positions gain it (the entering arc adds flow into row ei and column ej).
    std::vector<int> path;  // arc indices from ei to target
    for (int node = target; node != ei; node = parent_node[node]) path.push_back(parent_arc[node]);
    std::reverse(path.begin(), path.end());

    double theta = std::numeric_limits<double>::infinity();
    int leave_pos = -1;
    for (std::size_t p = 0; p < path.size(); p += 2) {
      const BasicArc& arc = basis_[path[p]];
      if (arc.flow < theta ||
          (arc.flow == theta && leave_pos >= 0 &&
           arc.src * m_ + arc.dst < basis_[path[leave_pos]].src * m_ + basis_[path[leave_pos]].dst)) {
        theta = arc.flow;
        leave_pos = static_cast<int>(p);
      }
    }
    if (leave_pos < 0) throw NumericFailure("transport simplex: no leaving arc");

    for (std::size_t p = 0; p < path.size(); ++p) {
      double& f = basis_[path[p]].flow;
      f += (p % 2 == 0) ? -theta : theta;
      if (f < 0.0) f = 0.0;
    }
    basis_[path[leave_pos]] = {ei, ej, theta};
    return theta;
  }

  int n_, m_;
  const std::vector<double>& supply_;
  const std::vector<double>& demand_;
  const std::vector<double>& cost_;
  double enter_tol_;
  std::vector<BasicArc> basis_;
  std::vector<std::vector<int>> adj_;  // node -> basis arc indices
  std::vector<double> u_, v_;          // potentials
};

void check_pair(const DiscreteDistribution& src, const DiscreteDistribution& dst) {
  src.validate();
  dst.validate();
  if (src.dim() != dst.dim()) {
    throw DimensionMismatch("transport: dimension mismatch (" + std::to_string(src.dim()) +
                            " vs " + std::to_string(dst.dim()) + ")");
  }
}

}  // namespace

TransportPlan solve_exact_transport(const DiscreteDistribution& src,
                                    const DiscreteDistribution& dst) {
  check_pair(src, dst);
  const std::size_t n = src.size(), m = dst.size();

  std::vector<double> cost(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) cost[i * m + j] = sq_dist(src.support[i], dst.support[j]);
  }

  TransportSimplex simplex(src.weights, dst.weights, cost);
  simplex.run();

  TransportPlan plan;
  plan.n_src = n;
  plan.n_dst = m;
  plan.flow = simplex.dense_flow();
  plan.cost = 0.0;
  for (std::size_t e = 0; e < plan.flow.size(); ++e) plan.cost += plan.flow[e] * cost[e];
  return plan;
}

double wasserstein2_sq(const DiscreteDistribution& src, const DiscreteDistribution& dst) {
  return solve_exact_transport(src, dst).cost;
}

double dirac_distance_sq(const Point& x, const DiscreteDistribution& q) {
  q.validate();
  if (x.size() != q.dim()) {
    throw DimensionMismatch("dirac_distance_sq: point has dimension " + std::to_string(x.size()) +
                            ", distribution has " + std::to_string(q.dim()));
  }
  double s = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) s += q.weights[j] * sq_dist(x, q.support[j]);
  return s;
}

std::vector<Point> barycentric_projection(const TransportPlan& plan,
                                          const DiscreteDistribution& src,
                                          const DiscreteDistribution& dst) {
  if (plan.n_src != src.size() || plan.n_dst != dst.size() ||
      plan.flow.size() != plan.n_src * plan.n_dst) {
    throw InvalidArgument("barycentric_projection: plan shape does not match distributions");
  }
  const std::size_t d = dst.dim();
  std::vector<Point> out(plan.n_src, Point(d, 0.0));
  for (std::size_t j = 0; j < plan.n_src; ++j) {
    if (src.weights[j] < 1e-12) {
      out[j] = src.support[j];
      continue;
    }
    for (std::size_t k = 0; k < plan.n_dst; ++k) {
      const double f = plan(j, k);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) out[j][c] += f * dst.support[k][c];
    }
    for (std::size_t c = 0; c < d; ++c) out[j][c] /= src.weights[j];
  }
  return out;
}

}  // namespace protoextract
