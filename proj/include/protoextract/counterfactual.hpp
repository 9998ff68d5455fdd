#pragma once

#include <cstddef>
#include <vector>

#include "protoextract/oracle.hpp"
#include "protoextract/point.hpp"

namespace protoextract {

enum class CfCost { L2, L1, NearestNeighbor };

/// Counterfactual search knobs. A candidate is valid once the target's
/// predicted probability reaches 0.5 + target_margin; the margin keeps
/// validity robust against the >= tie rule at exactly 0.5.
struct CfConfig {
  CfCost cost = CfCost::L2;
  double target_margin = 0.05;  // in (0, 0.5)
  double lambda_init = 1.0;     // initial distance weight of the search objective
  double lambda_mult = 2.0;     // > 1; lambda is divided by this until validity is reachable
  std::size_t max_iters = 2000; // gradient steps per lambda level
  double step_size = 0.05;
  bool clip_unit_box = false;   // clip the result to [0,1]^d and re-check validity
  std::vector<Point> neighbor_pool;  // class-1 points, required for NearestNeighbor
};

/// Exact minimal-L2 counterfactual for a linear model: the projection of x
/// onto the hyperplane where the predicted probability equals
/// 0.5 + target_margin. Accepts any x (a point already past the margin maps
/// to itself).
Point mccf_l2(const LinearModel& model, const Point& x, const CfConfig& cfg);

/// Iterative search: normalized gradient descent on
/// (proba - 1)^2 + lambda * d(x, x'), lambda lowered by the schedule until a
/// valid point is crossed, then bisection pulls the crossing tight. Requires
/// predict_label(model, x) == 0. cost must be L2 or L1.
Point mccf_iterative(const LinearModel& model, const Point& x, const CfConfig& cfg);

/// Closest pool point to x in L2; ties resolve to the lowest index.
Point nearest_neighbor_cf(const Point& x, const std::vector<Point>& pool);

}  // namespace protoextract
