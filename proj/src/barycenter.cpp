#include "protoextract/barycenter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "protoextract/errors.hpp"
#include "protoextract/ot.hpp"
#include "protoextract/rng.hpp"

namespace protoextract {

DiscreteDistribution init_support(const std::vector<Point>& samples, std::size_t k,
                                  std::uint64_t seed) {
  if (samples.empty()) throw InvalidArgument("init_support: empty sample set");
  if (k == 0) throw InvalidArgument("init_support: k must be >= 1");
  const std::size_t n = samples.size();
  if (k >= n) return DiscreteDistribution::uniform(samples);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  std::vector<char> taken(n, 0);
  chosen.reserve(k);

  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  chosen.push_back(first(rng));
  taken[chosen.back()] = 1;

  // D^2 sampling: d2[i] tracks the squared distance to the nearest chosen
  // center, updated incrementally as centers are added.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (chosen.size() < k) {
    const Point& last = samples[chosen.back()];
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(samples[i], last));
      total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double remaining = u(rng);
      for (std::size_t i = 0; i < n; ++i) {
        remaining -= d2[i];
        if (remaining <= 0.0 && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
      if (pick == n) {
        for (std::size_t i = n; i-- > 0;) {
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    }
    if (pick == n) {
      // All remaining samples duplicate a chosen center; fall back to the
      // lowest untaken index so the result still has k atoms.
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i]) {
          pick = i;
          break;
        }
      }
    }
    chosen.push_back(pick);
    taken[pick] = 1;
  }

  std::vector<Point> support;
  support.reserve(k);
  for (std::size_t i : chosen) support.push_back(samples[i]);
  return DiscreteDistribution::uniform(std::move(support));
}

double class_objective(const DiscreteDistribution& q, const DiscreteDistribution& p_class,
                       const DiscreteDistribution* p_cf, double lambda_c) {
  if (lambda_c < 0.0) throw InvalidArgument("class_objective: lambda_c must be >= 0");
  double obj = wasserstein2_sq(q, p_class);
  if (p_cf != nullptr && lambda_c > 0.0) obj += lambda_c * wasserstein2_sq(q, *p_cf);
  return obj;
}

namespace {

// Envelope gradient of W2(q, p_cf) with respect to q's atom j, using the
// fixed optimal plan: (a_j x_j - Sum_k plan[j,k] y_k) / W2.
void fill_distance_gradient(const DiscreteDistribution& q, const DiscreteDistribution& p_cf,
                            const TransportPlan& plan, double w2, double scale,
                            std::vector<Point>& grad) {
  const std::size_t d = q.dim();
  for (std::size_t j = 0; j < q.size(); ++j) {
    Point g(d, 0.0);
    for (std::size_t c = 0; c < d; ++c) g[c] = q.weights[j] * q.support[j][c];
    for (std::size_t k = 0; k < p_cf.size(); ++k) {
      const double f = plan(j, k);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) g[c] -= f * p_cf.support[k][c];
    }
    for (std::size_t c = 0; c < d; ++c) grad[j][c] = scale * g[c] / w2;
  }
}

}  // namespace

SymmetryPenalty symmetry_penalty(const DiscreteDistribution& q0, const DiscreteDistribution& q1,
                                 const DiscreteDistribution& p_cf) {
  const auto plan0 = solve_exact_transport(q0, p_cf);
  const auto plan1 = solve_exact_transport(q1, p_cf);
  const double w0 = std::sqrt(std::max(0.0, plan0.cost));
  const double w1 = std::sqrt(std::max(0.0, plan1.cost));
  const double delta = w0 - w1;

  SymmetryPenalty out;
  out.value = delta * delta;
  out.grad0.assign(q0.size(), Point(q0.dim(), 0.0));
  out.grad1.assign(q1.size(), Point(q1.dim(), 0.0));
  if (w0 >= 1e-9) fill_distance_gradient(q0, p_cf, plan0, w0, 2.0 * delta, out.grad0);
  if (w1 >= 1e-9) fill_distance_gradient(q1, p_cf, plan1, w1, -2.0 * delta, out.grad1);
  return out;
}

namespace {

void check_samples(const std::vector<Point>& pts, std::size_t d, const char* name) {
  for (const Point& p : pts) {
    if (p.size() != d) throw DimensionMismatch(std::string("fit_prototypes: ") + name +
                                               " contains points of mixed dimension");
    if (!all_finite(p)) throw InvalidArgument(std::string("fit_prototypes: ") + name +
                                              " contains a non-finite point");
  }
}

// One free-support fixed-point step: move each atom to the lambda-weighted
// average of its barycentric projections onto p_class and p_cf.
void fixed_point_step(DiscreteDistribution& q, const DiscreteDistribution& p_class,
                      const DiscreteDistribution* p_cf, double lambda) {
  const auto proj_class = barycentric_projection(solve_exact_transport(q, p_class), q, p_class);
  if (p_cf == nullptr || lambda <= 0.0) {
    q.support = proj_class;
    return;
  }
  const auto proj_cf = barycentric_projection(solve_exact_transport(q, *p_cf), q, *p_cf);
  const std::size_t d = q.dim();
  for (std::size_t j = 0; j < q.size(); ++j) {
    for (std::size_t c = 0; c < d; ++c) {
      q.support[j][c] = (proj_class[j][c] + lambda * proj_cf[j][c]) / (1.0 + lambda);
    }
  }
}

}  // namespace

PrototypePair fit_prototypes(const std::vector<Point>& d0, const std::vector<Point>& d1,
                             const std::vector<Point>& d_cf, const PrototypeFitConfig& cfg) {
  if (d0.empty() || d1.empty()) {
    throw InvalidArgument("fit_prototypes: both class sample sets must be non-empty");
  }
  if (cfg.k == 0) throw InvalidArgument("fit_prototypes: k must be >= 1");
  if (cfg.tol <= 0.0) throw InvalidArgument("fit_prototypes: tol must be > 0");
  if (cfg.max_outer_iters == 0) throw InvalidArgument("fit_prototypes: max_outer_iters must be >= 1");
  if (cfg.reg_step <= 0.0) throw InvalidArgument("fit_prototypes: reg_step must be > 0");
  if (cfg.lambda0() < 0.0 || cfg.lambda1() < 0.0 || cfg.gamma < 0.0) {
    throw InvalidArgument("fit_prototypes: lambda_c and gamma must be >= 0");
  }
  const std::size_t dim = d0.front().size();
  check_samples(d0, dim, "d0");
  check_samples(d1, dim, "d1");
  check_samples(d_cf, dim, "d_cf");

  const bool have_cf = !d_cf.empty();
  const auto p0 = DiscreteDistribution::uniform(d0);
  const auto p1 = DiscreteDistribution::uniform(d1);
  DiscreteDistribution pcf;
  if (have_cf) pcf = DiscreteDistribution::uniform(d_cf);
  const DiscreteDistribution* pcf_ptr = have_cf ? &pcf : nullptr;
  const double lam0 = cfg.lambda0();
  const double lam1 = cfg.lambda1();
  const bool use_gamma = cfg.gamma > 0.0 && have_cf;

  PrototypePair pair;
  pair.q0 = init_support(d0, cfg.k, mix_seed(cfg.seed, 0));
  pair.q1 = init_support(d1, cfg.k, mix_seed(cfg.seed, 1));

  const auto objective = [&](const DiscreteDistribution& a, const DiscreteDistribution& b) {
    double obj = class_objective(a, p0, pcf_ptr, lam0) + class_objective(b, p1, pcf_ptr, lam1);
    if (use_gamma) obj += cfg.gamma * symmetry_penalty(a, b, pcf).value;
    return obj;
  };

  double prev = objective(pair.q0, pair.q1);
  double best_obj = prev;
  auto best_q0 = pair.q0.support;
  auto best_q1 = pair.q1.support;
  std::size_t best_idx = 0;  // 0 marks the initial state

  auto& trace = pair.objective_trace;
  for (std::size_t iter = 0; iter < cfg.max_outer_iters; ++iter) {
    fixed_point_step(pair.q0, p0, pcf_ptr, lam0);
    fixed_point_step(pair.q1, p1, pcf_ptr, lam1);

    if (use_gamma) {
      const auto pen = symmetry_penalty(pair.q0, pair.q1, pcf);
      const double step = cfg.reg_step * cfg.gamma;
      for (std::size_t j = 0; j < pair.q0.size(); ++j) {
        for (std::size_t c = 0; c < dim; ++c) pair.q0.support[j][c] -= step * pen.grad0[j][c];
      }
      for (std::size_t j = 0; j < pair.q1.size(); ++j) {
        for (std::size_t c = 0; c < dim; ++c) pair.q1.support[j][c] -= step * pen.grad1[j][c];
      }
      for (const Point& p : pair.q0.support) {
        if (!all_finite(p)) throw NumericFailure("fit_prototypes: q0 diverged (reduce reg_step)");
      }
      for (const Point& p : pair.q1.support) {
        if (!all_finite(p)) throw NumericFailure("fit_prototypes: q1 diverged (reduce reg_step)");
      }
    }

    const double cur = objective(pair.q0, pair.q1);
    if (!std::isfinite(cur)) throw NumericFailure("fit_prototypes: objective diverged");
    trace.push_back(cur);
    if (cur <= best_obj) {
      best_obj = cur;
      best_q0 = pair.q0.support;
      best_q1 = pair.q1.support;
      best_idx = trace.size();
    }
    const double rel = std::abs(prev - cur) / std::max(std::abs(prev), 1e-12);
    prev = cur;
    if (rel < cfg.tol) break;
  }

  // Return the best iterate. Entries past it are dropped so the trace ends
  // at the value the returned supports realize.
  pair.q0.support = std::move(best_q0);
  pair.q1.support = std::move(best_q1);
  if (best_idx == 0) {
    trace.assign(1, best_obj);
  } else {
    trace.resize(best_idx);
  }
  return pair;
}

}  // namespace protoextract
