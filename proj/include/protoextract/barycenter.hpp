#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "protoextract/distribution.hpp"

namespace protoextract {

/// Knobs for fit_prototypes. lambda_c weights the counterfactual term and is
/// shared by both classes unless a per-class override is set; gamma scales
/// the symmetry penalty; reg_step is the fixed gradient step applied to it.
struct PrototypeFitConfig {
  std::size_t k = 50;
  double lambda_c = 0.5;
  std::optional<double> lambda_c0;  // per-class override, defaults to lambda_c
  std::optional<double> lambda_c1;
  double gamma = 0.3;
  std::size_t max_outer_iters = 100;
  double tol = 1e-5;
  double reg_step = 0.05;
  std::uint64_t seed = 0;

  double lambda0() const { return lambda_c0.value_or(lambda_c); }
  double lambda1() const { return lambda_c1.value_or(lambda_c); }
};

/// Fitted class prototypes. objective_trace holds the joint objective value
/// after each retained outer iteration; the returned supports realize its
/// last entry, which never exceeds its first.
struct PrototypePair {
  DiscreteDistribution q0;
  DiscreteDistribution q1;
  std::vector<double> objective_trace;
};

/// Value and per-atom envelope gradients of the symmetry penalty
/// (W2(q0,p_cf) - W2(q1,p_cf))^2 with the optimal plans held fixed.
struct SymmetryPenalty {
  double value = 0.0;
  std::vector<Point> grad0;
  std::vector<Point> grad1;
};

/// k-means++ seeding over samples; returns min(k, |samples|) of the samples
/// with uniform weights, deterministic per seed.
DiscreteDistribution init_support(const std::vector<Point>& samples, std::size_t k,
                                  std::uint64_t seed);

/// W2^2(q, p_class) + lambda_c * W2^2(q, p_cf); pass p_cf = nullptr when
/// there are no counterfactuals (the second term is then zero).
double class_objective(const DiscreteDistribution& q, const DiscreteDistribution& p_class,
                       const DiscreteDistribution* p_cf, double lambda_c);

/// Gradients are zero wherever the corresponding W2 falls below 1e-9; the
/// square-root derivative is unbounded there and zero is a safe stationary
/// choice.
SymmetryPenalty symmetry_penalty(const DiscreteDistribution& q0, const DiscreteDistribution& q1,
                                 const DiscreteDistribution& p_cf);

/// Alternating fit: per outer iteration one free-support fixed-point step
/// for each class, then (gamma > 0 and counterfactuals present) one gradient
/// step against the symmetry penalty. Stops when the relative objective
/// change drops below cfg.tol or after cfg.max_outer_iters. The best iterate
/// seen is returned, so a late fluctuation cannot end the fit worse than it
/// started.
PrototypePair fit_prototypes(const std::vector<Point>& d0, const std::vector<Point>& d1,
                             const std::vector<Point>& d_cf, const PrototypeFitConfig& cfg);

}  // namespace protoextract
