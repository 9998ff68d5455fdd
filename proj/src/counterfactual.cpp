#include "protoextract/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "protoextract/errors.hpp"

namespace protoextract {

namespace {

void check_cfg(const CfConfig& cfg) {
  if (!(cfg.target_margin > 0.0 && cfg.target_margin < 0.5)) {
    throw InvalidArgument("cf config: target_margin must lie in (0, 0.5)");
  }
  if (cfg.lambda_mult <= 1.0) throw InvalidArgument("cf config: lambda_mult must be > 1");
  if (cfg.lambda_init <= 0.0) throw InvalidArgument("cf config: lambda_init must be > 0");
  if (cfg.step_size <= 0.0) throw InvalidArgument("cf config: step_size must be > 0");
  if (cfg.max_iters == 0) throw InvalidArgument("cf config: max_iters must be >= 1");
}

void check_dims(const LinearModel& model, const Point& x) {
  if (model.weights.size() != x.size()) {
    throw DimensionMismatch("counterfactual: model dimension " +
                            std::to_string(model.weights.size()) + " vs point dimension " +
                            std::to_string(x.size()));
  }
}

Point clip_and_check(const LinearModel& model, Point cf, double need) {
  for (double& c : cf) c = std::clamp(c, 0.0, 1.0);
  if (predict_proba(model, cf) < need) {
    throw NumericFailure("counterfactual: clipping to [0,1] destroyed validity");
  }
  return cf;
}

}  // namespace

Point mccf_l2(const LinearModel& model, const Point& x, const CfConfig& cfg) {
  check_cfg(cfg);
  check_dims(model, x);
  const double wn2 = sq_norm(model.weights);
  if (wn2 < 1e-24) throw InvalidArgument("mccf_l2: degenerate model (||w|| ~ 0)");

  const double p = 0.5 + cfg.target_margin;
  const double target_logit = std::log(p / (1.0 - p));
  const double z = dot(model.weights, x) + model.bias;
  Point cf = x;
  const double shift = (target_logit - z) / wn2;
  // A point already past the margin needs no correction.
  if (shift > 0.0) {
    for (std::size_t c = 0; c < cf.size(); ++c) cf[c] += shift * model.weights[c];
  }
  if (cfg.clip_unit_box) return clip_and_check(model, std::move(cf), p);
  return cf;
}

Point mccf_iterative(const LinearModel& model, const Point& x, const CfConfig& cfg) {
  check_cfg(cfg);
  check_dims(model, x);
  if (cfg.cost != CfCost::L2 && cfg.cost != CfCost::L1) {
    throw InvalidArgument("mccf_iterative: cost must be L2 or L1");
  }
  if (predict_label(model, x) != 0) {
    throw InvalidArgument("mccf_iterative: input must be classified 0 by the model");
  }
  if (sq_norm(model.weights) < 1e-24) {
    throw InvalidArgument("mccf_iterative: degenerate model (||w|| ~ 0)");
  }

  const double need = 0.5 + cfg.target_margin;
  const std::size_t d = x.size();

  // Bisection between an invalid and a valid point: returns the tightest
  // valid point on the segment.
  const auto refine = [&](const Point& invalid, Point valid) {
    Point lo = invalid;
    for (int it = 0; it < 200; ++it) {
      Point mid(d);
      for (std::size_t c = 0; c < d; ++c) mid[c] = 0.5 * (lo[c] + valid[c]);
      if (predict_proba(model, mid) >= need) {
        valid = std::move(mid);
      } else {
        lo = std::move(mid);
      }
      if (sq_dist(lo, valid) < 1e-24) break;
    }
    return valid;
  };

  double lambda = cfg.lambda_init;
  for (int level = 0; level < 64; ++level, lambda /= cfg.lambda_mult) {
    Point cur = x;  // invalid throughout the loop; a valid step returns
    for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
      // Objective gradient: 2(p-1)p(1-p) w + lambda * d'(x, cur). The step
      // is normalized so the flat sigmoid tail deep in class 0 cannot stall
      // the search.
      const double p = predict_proba(model, cur);
      const double loss_term = 2.0 * (p - 1.0) * p * (1.0 - p);
      Point g(d, 0.0);
      for (std::size_t c = 0; c < d; ++c) {
        g[c] = loss_term * model.weights[c];
        const double diff = cur[c] - x[c];
        if (cfg.cost == CfCost::L2) {
          g[c] += lambda * 2.0 * diff;
        } else if (diff != 0.0) {
          g[c] += lambda * (diff > 0.0 ? 1.0 : -1.0);
        }
      }
      const double gn = std::sqrt(sq_norm(g));
      if (gn < 1e-12) break;  // flat: distance term dominates, lower lambda
      Point next(d);
      for (std::size_t c = 0; c < d; ++c) next[c] = cur[c] - cfg.step_size * g[c] / gn;
      const double p_next = predict_proba(model, next);
      if (p_next >= need) {
        Point result = refine(cur, next);
        if (cfg.clip_unit_box) return clip_and_check(model, std::move(result), need);
        return result;
      }
      // A non-improving step means the walk hit the equilibrium where the
      // distance term balances the loss term, short of validity. Oscillating
      // there is useless (and numerically messy); this lambda level cannot
      // succeed, so move on to the next one.
      if (p_next <= p) break;
      cur = std::move(next);
    }
  }
  throw NumericFailure("mccf_iterative: no valid counterfactual within the lambda schedule");
}

Point nearest_neighbor_cf(const Point& x, const std::vector<Point>& pool) {
  if (pool.empty()) throw InvalidArgument("nearest_neighbor_cf: empty pool");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].size() != x.size()) {
      throw DimensionMismatch("nearest_neighbor_cf: pool point dimension mismatch");
    }
    const double dist = sq_dist(x, pool[i]);
    if (dist < best_d) {
      best_d = dist;
      best = i;
    }
  }
  return pool[best];
}

}  // namespace protoextract
