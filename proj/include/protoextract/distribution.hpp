#pragma once

#include <cstddef>
#include <vector>

#include "protoextract/point.hpp"

namespace protoextract {

/// Weighted point cloud on R^d.
///
/// Invariants (enforced by make()/validate()):
///   - weights are strictly positive and sum to 1 within 1e-9,
///   - support and weights have equal length >= 1,
///   - all points share the same dimension d >= 1.
struct DiscreteDistribution {
  std::vector<Point> support;
  std::vector<double> weights;

  std::size_t size() const { return support.size(); }
  std::size_t dim() const { return support.empty() ? 0 : support.front().size(); }

  /// Mean of the distribution, Sum_j w_j * y_j.
  Point mean() const;

  /// Throws InvalidArgument/DimensionMismatch if any invariant is broken.
  void validate() const;

  /// Validating constructor. Zero-weight atoms are rejected, not dropped.
  static DiscreteDistribution make(std::vector<Point> support, std::vector<double> weights);

  /// Uniform weights 1/n over the given points.
  static DiscreteDistribution uniform(std::vector<Point> support);

  /// Dirac mass at x.
  static DiscreteDistribution dirac(Point x);
};

/// Coupling between two discrete distributions, stored dense row-major.
///
/// Invariants: non-negative entries, row sums equal to the source weights
/// and column sums to the target weights within 1e-8, and `cost` equal to
/// Sum_ij flow[i,j] * ||x_i - y_j||^2 within 1e-8.
struct TransportPlan {
  std::size_t n_src = 0;
  std::size_t n_dst = 0;
  std::vector<double> flow;  // n_src * n_dst entries, row-major
  double cost = 0.0;

  double operator()(std::size_t i, std::size_t j) const { return flow[i * n_dst + j]; }

  std::vector<double> row_sums() const;
  std::vector<double> col_sums() const;
};

}  // namespace protoextract
