#pragma once

#include <vector>

#include "protoextract/distribution.hpp"

namespace protoextract {

/// Exact optimal transport between src and dst under squared Euclidean
/// ground cost, solved with a transportation simplex. The returned plan is
/// feasible and cost-optimal; the plan itself need not be unique, ties are
/// resolved by the solver's deterministic pivoting order.
TransportPlan solve_exact_transport(const DiscreteDistribution& src,
                                    const DiscreteDistribution& dst);

/// Squared 2-Wasserstein distance, i.e. the optimal transport cost.
double wasserstein2_sq(const DiscreteDistribution& src, const DiscreteDistribution& dst);

/// W2^2(delta_x, q) via the product-coupling closed form
/// Sum_j w_j ||x - y_j||^2; no LP involved.
double dirac_distance_sq(const Point& x, const DiscreteDistribution& q);

/// Free-support update step: for each source atom j, the plan-weighted
/// average of its transport destinations, (Sum_k plan[j,k] y_k) / w_j.
/// Rows with source weight below 1e-12 keep the original source point.
std::vector<Point> barycentric_projection(const TransportPlan& plan,
                                          const DiscreteDistribution& src,
                                          const DiscreteDistribution& dst);

}  // namespace protoextract
