#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "protoextract/errors.hpp"
#include "protoextract/ot.hpp"
#include "test_util.hpp"

using namespace protoextract;
using testutil::quantile_coupling_cost_1d;
using testutil::random_distribution;

namespace {

DiscreteDistribution dist1d(std::vector<double> xs, std::vector<double> ws) {
  std::vector<Point> support;
  for (double x : xs) support.push_back({x});
  return DiscreteDistribution::make(std::move(support), std::move(ws));
}

void check_feasible(const TransportPlan& plan, const DiscreteDistribution& src,
                    const DiscreteDistribution& dst) {
  REQUIRE(plan.n_src == src.size());
  REQUIRE(plan.n_dst == dst.size());
  for (double f : plan.flow) CHECK(f >= 0.0);
  const auto rows = plan.row_sums();
  const auto cols = plan.col_sums();
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(std::abs(rows[i] - src.weights[i]) < 1e-8);
  for (std::size_t j = 0; j < cols.size(); ++j) CHECK(std::abs(cols[j] - dst.weights[j]) < 1e-8);
  double recomputed = 0.0;
  for (std::size_t i = 0; i < plan.n_src; ++i) {
    for (std::size_t j = 0; j < plan.n_dst; ++j) {
      recomputed += plan(i, j) * sq_dist(src.support[i], dst.support[j]);
    }
  }
  CHECK(std::abs(recomputed - plan.cost) < 1e-8);
}

}  // namespace

TEST_CASE("distribution validation") {
  CHECK_THROWS_AS(DiscreteDistribution::make({}, {}), InvalidArgument);
  CHECK_THROWS_AS(DiscreteDistribution::make({{0.0}}, {1.0, 2.0}), InvalidArgument);
  CHECK_THROWS_AS(DiscreteDistribution::make({{0.0}, {1.0, 2.0}}, {0.5, 0.5}), DimensionMismatch);
  CHECK_THROWS_AS(DiscreteDistribution::make({{0.0}, {1.0}}, {0.5, 0.6}), InvalidArgument);
  CHECK_THROWS_AS(DiscreteDistribution::make({{0.0}, {1.0}}, {1.0, 0.0}), InvalidArgument);
  CHECK_THROWS_AS(DiscreteDistribution::make({{0.0}, {1.0}}, {1.5, -0.5}), InvalidArgument);
  const double nan = std::nan("");
  CHECK_THROWS_AS(DiscreteDistribution::make({{nan}}, {1.0}), InvalidArgument);
  CHECK_THROWS_AS(DiscreteDistribution::make({{0.0}}, {nan}), InvalidArgument);

  const auto u = DiscreteDistribution::uniform({{0.0, 0.0}, {1.0, 1.0}});
  CHECK(u.size() == 2);
  CHECK(u.dim() == 2);
  CHECK(u.weights[0] == doctest::Approx(0.5));
  const auto d = DiscreteDistribution::dirac({3.0, 4.0});
  CHECK(d.size() == 1);
  CHECK(d.weights[0] == 1.0);

  const auto m = dist1d({0.0, 1.0}, {0.25, 0.75}).mean();
  CHECK(m[0] == doctest::Approx(0.75));
}

TEST_CASE("transport between diracs") {
  const auto src = DiscreteDistribution::dirac({0.0, 0.0});
  const auto dst = DiscreteDistribution::dirac({3.0, 4.0});
  const auto plan = solve_exact_transport(src, dst);
  REQUIRE(plan.flow.size() == 1);
  CHECK(plan(0, 0) == doctest::Approx(1.0));
  CHECK(plan.cost == doctest::Approx(25.0));
}

TEST_CASE("transport of a distribution onto itself costs zero") {
  const auto u = DiscreteDistribution::uniform({{0.0, 0.0}, {1.0, 1.0}});
  CHECK(solve_exact_transport(u, u).cost < 1e-12);

  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const auto mu = random_distribution(rng, 6, 3, false);
    CHECK(wasserstein2_sq(mu, mu) < 1e-10);
  }
}

TEST_CASE("1-D two-atom example") {
  const auto src = dist1d({0.0, 1.0}, {0.5, 0.5});
  const auto dst = dist1d({0.5, 1.5}, {0.5, 0.5});
  CHECK(solve_exact_transport(src, dst).cost == doctest::Approx(0.25));
}

TEST_CASE("dirac pair distance is squared euclidean") {
  const auto a = DiscreteDistribution::dirac({1.0, 2.0, 3.0});
  const auto b = DiscreteDistribution::dirac({2.0, 4.0, 5.0});
  CHECK(wasserstein2_sq(a, b) == doctest::Approx(9.0));
}

TEST_CASE("two-point cloud versus midpoint dirac") {
  const auto u = DiscreteDistribution::uniform({{0.0, 0.0}, {2.0, 0.0}});
  const auto d = DiscreteDistribution::dirac({1.0, 0.0});
  CHECK(wasserstein2_sq(u, d) == doctest::Approx(1.0));
  CHECK(wasserstein2_sq(d, u) == doctest::Approx(1.0));
}

TEST_CASE("dimension and validity errors") {
  const auto a = DiscreteDistribution::dirac({0.0});
  const auto b = DiscreteDistribution::dirac({0.0, 0.0});
  CHECK_THROWS_AS(solve_exact_transport(a, b), DimensionMismatch);
  CHECK_THROWS_AS(dirac_distance_sq({0.0}, b), DimensionMismatch);

  DiscreteDistribution broken;
  broken.support = {{0.0}, {1.0}};
  broken.weights = {0.9, 0.3};
  CHECK_THROWS_AS(solve_exact_transport(a, broken), InvalidArgument);
}

TEST_CASE("dirac closed form") {
  CHECK(dirac_distance_sq({1.0, 1.0}, DiscreteDistribution::dirac({4.0, 5.0})) ==
        doctest::Approx(25.0));
  const auto u = DiscreteDistribution::uniform({{0.0, 0.0}, {2.0, 0.0}});
  CHECK(dirac_distance_sq({1.0, 0.0}, u) == doctest::Approx(1.0));
  CHECK(dirac_distance_sq({0.0, 0.0}, u) == doctest::Approx(2.0));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  for (int rep = 0; rep < 100; ++rep) {
    const auto q = random_distribution(rng, 8, 3, false);
    Point x(3);
    for (double& c : x) c = coord(rng);
    const double direct = dirac_distance_sq(x, q);
    const double lp = wasserstein2_sq(DiscreteDistribution::dirac(x), q);
    CHECK(std::abs(direct - lp) < 1e-10);
  }
}

TEST_CASE("barycentric projection") {
  const auto dst = DiscreteDistribution::dirac({3.0, 4.0});
  TransportPlan plan{1, 1, {1.0}, 25.0};
  const auto src = DiscreteDistribution::dirac({0.0, 0.0});
  auto proj = barycentric_projection(plan, src, dst);
  REQUIRE(proj.size() == 1);
  CHECK(proj[0][0] == doctest::Approx(3.0));
  CHECK(proj[0][1] == doctest::Approx(4.0));

  const auto cloud = DiscreteDistribution::uniform({{0.0, 1.0}, {2.0, 3.0}});
  const auto identity = solve_exact_transport(cloud, cloud);
  proj = barycentric_projection(identity, cloud, cloud);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(proj[j][0] == doctest::Approx(cloud.support[j][0]));
    CHECK(proj[j][1] == doctest::Approx(cloud.support[j][1]));
  }

  const auto src1 = dist1d({0.0, 1.0}, {0.5, 0.5});
  const auto dst1 = dist1d({0.5, 1.5}, {0.5, 0.5});
  proj = barycentric_projection(solve_exact_transport(src1, dst1), src1, dst1);
  CHECK(proj[0][0] == doctest::Approx(0.5));
  CHECK(proj[1][0] == doctest::Approx(1.5));

  TransportPlan bad{2, 1, {1.0}, 0.0};
  CHECK_THROWS_AS(barycentric_projection(bad, src, dst), InvalidArgument);
}

TEST_CASE("1-D quantile oracle agreement") {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  std::uniform_int_distribution<std::size_t> n_dist(1, 8);
  for (int rep = 0; rep < 200; ++rep) {
    const bool uniform = rep % 2 == 0;
    const auto src = random_distribution(rng, 8, 1, uniform);
    const auto dst = random_distribution(rng, 8, 1, uniform);
    std::vector<double> xs, ys;
    for (const auto& p : src.support) xs.push_back(p[0]);
    for (const auto& p : dst.support) ys.push_back(p[0]);
    const double expected = quantile_coupling_cost_1d(xs, src.weights, ys, dst.weights);
    const double got = wasserstein2_sq(src, dst);
    CHECK(std::abs(got - expected) < 1e-9);
  }
}

TEST_CASE("random feasibility and symmetry") {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t d = 1 + static_cast<std::size_t>(rep % 4);
    const auto src = random_distribution(rng, 8, d, rep % 3 == 0);
    const auto dst = random_distribution(rng, 8, d, rep % 3 == 0);
    const auto plan = solve_exact_transport(src, dst);
    check_feasible(plan, src, dst);
    CHECK(plan.cost >= 0.0);
    CHECK(std::abs(plan.cost - wasserstein2_sq(dst, src)) < 1e-8);

    // Optimal cost never exceeds the independence coupling's cost.
    double indep = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      for (std::size_t j = 0; j < dst.size(); ++j) {
        indep += src.weights[i] * dst.weights[j] * sq_dist(src.support[i], dst.support[j]);
      }
    }
    CHECK(plan.cost <= indep + 1e-9);
  }
}

TEST_CASE("zero cost only for identical point sets") {
  const auto a = DiscreteDistribution::make({{0.0, 1.0}, {2.0, 0.5}}, {0.3, 0.7});
  const auto permuted = DiscreteDistribution::make({{2.0, 0.5}, {0.0, 1.0}}, {0.7, 0.3});
  CHECK(wasserstein2_sq(a, permuted) < 1e-12);

  auto shifted = a;
  shifted.support[0][0] += 0.1;
  CHECK(wasserstein2_sq(a, shifted) > 1e-6);
}

TEST_CASE("triangle inequality") {
  std::mt19937_64 rng(2025);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t d = 1 + static_cast<std::size_t>(rep % 3);
    const auto a = random_distribution(rng, 6, d, false);
    const auto b = random_distribution(rng, 6, d, false);
    const auto c = random_distribution(rng, 6, d, false);
    const double ab = std::sqrt(wasserstein2_sq(a, b));
    const double bc = std::sqrt(wasserstein2_sq(b, c));
    const double ac = std::sqrt(wasserstein2_sq(a, c));
    CHECK(ac <= ab + bc + 1e-7);
  }
}

TEST_CASE("larger unbalanced-support instance stays feasible") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> coord(0.0, 1.0);
  std::vector<Point> xs(30, Point(5)), ys(120, Point(5));
  for (auto& p : xs) {
    for (double& c : p) c = coord(rng);
  }
  for (auto& p : ys) {
    for (double& c : p) c = coord(rng);
  }
  const auto src = DiscreteDistribution::uniform(std::move(xs));
  const auto dst = DiscreteDistribution::uniform(std::move(ys));
  const auto plan = solve_exact_transport(src, dst);
  check_feasible(plan, src, dst);
  CHECK(plan.cost > 0.0);
}
