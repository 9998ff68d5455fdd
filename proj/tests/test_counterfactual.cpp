#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "protoextract/counterfactual.hpp"
#include "protoextract/errors.hpp"

using namespace protoextract;

namespace {

double euclid(const Point& a, const Point& b) { return std::sqrt(sq_dist(a, b)); }

// Random linear model with a label-0 point; weights bounded away from zero
// so the searched distance stays moderate.
struct Instance {
  LinearModel model;
  Point x;
};

Instance random_instance(std::mt19937_64& rng, std::size_t d) {
  std::uniform_real_distribution<double> mag(0.3, 2.0);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  std::bernoulli_distribution flip(0.5);
  Instance inst;
  inst.model.weights.resize(d);
  for (double& w : inst.model.weights) w = (flip(rng) ? 1.0 : -1.0) * mag(rng);
  inst.model.bias = coord(rng) * 0.5;
  inst.x.resize(d);
  do {
    for (double& c : inst.x) c = coord(rng);
  } while (predict_label(inst.model, inst.x) != 0);
  return inst;
}

}  // namespace

TEST_CASE("l2 closed form hits the margin hyperplane") {
  const LinearModel model{{1.0, 0.0}, 0.0};
  CfConfig cfg;
  const auto cf = mccf_l2(model, {-2.0, 0.0}, cfg);
  CHECK(cf[0] == doctest::Approx(std::log(0.55 / 0.45)).epsilon(1e-12));
  CHECK(cf[1] == doctest::Approx(0.0));
  CHECK(predict_proba(model, cf) == doctest::Approx(0.55));
  CHECK(predict_label(model, cf) == 1);
}

TEST_CASE("a point on the margin maps to itself") {
  const LinearModel model{{1.0, 0.0}, 0.0};
  CfConfig cfg;
  const double p = 0.5 + cfg.target_margin;
  const Point on_margin = {std::log(p / (1.0 - p)), -0.3};
  const auto cf = mccf_l2(model, on_margin, cfg);
  CHECK(cf[0] == on_margin[0]);
  CHECK(cf[1] == on_margin[1]);

  // Past the margin is also left untouched.
  const auto past = mccf_l2(model, {5.0, 1.0}, cfg);
  CHECK(past[0] == 5.0);
}

TEST_CASE("l2 output is minimal against a grid search") {
  const LinearModel model{{1.3, -0.7}, 0.2};
  const Point x = {-1.0, 0.5};
  REQUIRE(predict_label(model, x) == 0);
  CfConfig cfg;
  const auto cf = mccf_l2(model, x, cfg);
  const double dist = euclid(cf, x);

  double best_grid = 1e18;
  for (double a = -3.0; a <= 3.0; a += 0.01) {
    for (double b = -3.0; b <= 3.0; b += 0.01) {
      if (predict_proba(model, {a, b}) >= 0.55) {
        best_grid = std::min(best_grid, euclid({a, b}, x));
      }
    }
  }
  CHECK(dist <= best_grid + 1e-9);
  CHECK(best_grid <= dist + 0.02);  // grid resolution slack
}

TEST_CASE("no strictly interior point of the segment is valid") {
  std::mt19937_64 rng(17);
  CfConfig cfg;
  for (int rep = 0; rep < 20; ++rep) {
    const auto inst = random_instance(rng, 3);
    const auto cf = mccf_l2(inst.model, inst.x, cfg);
    for (double t = 0.05; t < 0.999; t += 0.05) {
      Point mid(3);
      for (std::size_t c = 0; c < 3; ++c) mid[c] = inst.x[c] + t * (cf[c] - inst.x[c]);
      CHECK(predict_proba(inst.model, mid) < 0.55);
    }
  }
}

TEST_CASE("distance grows with the target margin") {
  std::mt19937_64 rng(29);
  for (int rep = 0; rep < 20; ++rep) {
    const auto inst = random_instance(rng, 2);
    double last = -1.0;
    for (double margin : {0.05, 0.15, 0.3, 0.45}) {
      CfConfig cfg;
      cfg.target_margin = margin;
      const double dist = euclid(mccf_l2(inst.model, inst.x, cfg), inst.x);
      CHECK(dist >= last);
      last = dist;
    }
  }
}

TEST_CASE("iterative search matches the closed form for l2 cost") {
  std::mt19937_64 rng(41);
  CfConfig cfg;
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t d = 1 + static_cast<std::size_t>(rep % 4);
    const auto inst = random_instance(rng, d);
    const auto exact = mccf_l2(inst.model, inst.x, cfg);
    const auto iter = mccf_iterative(inst.model, inst.x, cfg);
    CHECK(euclid(exact, iter) < 1e-3);
    CHECK(predict_proba(inst.model, iter) >= 0.55);
  }
}

TEST_CASE("l1 cost moves only the active coordinate of an axis model") {
  const LinearModel model{{2.0, 0.0}, -0.5};
  const Point x = {-1.0, 0.7};
  REQUIRE(predict_label(model, x) == 0);
  CfConfig cfg;
  cfg.cost = CfCost::L1;
  const auto cf = mccf_iterative(model, x, cfg);
  CHECK(predict_label(model, cf) == 1);
  CHECK(std::abs(cf[1] - 0.7) < 1e-6);
  CHECK(cf[0] > x[0]);
}

TEST_CASE("iterative search rejects class-1 inputs and bad configs") {
  const LinearModel model{{1.0}, 0.0};
  CfConfig cfg;
  CHECK_THROWS_AS(mccf_iterative(model, {1.0}, cfg), InvalidArgument);

  auto bad = cfg;
  bad.target_margin = 0.0;
  CHECK_THROWS_AS(mccf_iterative(model, {-1.0}, bad), InvalidArgument);
  bad.target_margin = 0.5;
  CHECK_THROWS_AS(mccf_l2(model, {-1.0}, bad), InvalidArgument);
  bad = cfg;
  bad.lambda_mult = 1.0;
  CHECK_THROWS_AS(mccf_iterative(model, {-1.0}, bad), InvalidArgument);
  bad = cfg;
  bad.cost = CfCost::NearestNeighbor;
  CHECK_THROWS_AS(mccf_iterative(model, {-1.0}, bad), InvalidArgument);

  const LinearModel degenerate{{0.0, 0.0}, -1.0};
  CHECK_THROWS_AS(mccf_l2(degenerate, {0.0, 0.0}, cfg), InvalidArgument);
  CHECK_THROWS_AS(mccf_iterative(degenerate, {0.0, 0.0}, cfg), InvalidArgument);
}

TEST_CASE("unit-box clipping preserves or rejects validity") {
  CfConfig cfg;
  cfg.clip_unit_box = true;

  // Clipping an inert coordinate keeps validity.
  const LinearModel model{{1.0, 0.0}, -0.1};
  const auto cf = mccf_l2(model, {-0.5, 1.7}, cfg);
  CHECK(cf[1] == 1.0);
  CHECK(predict_proba(model, cf) >= 0.55);

  // A boundary beyond the box cannot be reached once clipped.
  const LinearModel far_model{{1.0}, -2.0};
  CHECK_THROWS_AS(mccf_l2(far_model, {0.1}, cfg), NumericFailure);
}

TEST_CASE("nearest neighbor counterfactuals") {
  CHECK(nearest_neighbor_cf({0.0, 0.0}, {{5.0, 5.0}}) == Point{5.0, 5.0});
  CHECK(nearest_neighbor_cf({0.0, 0.0}, {{1.0, 0.0}, {0.0, 2.0}}) == Point{1.0, 0.0});
  // Equidistant pool: lowest index wins.
  CHECK(nearest_neighbor_cf({0.0, 0.0}, {{1.0, 0.0}, {-1.0, 0.0}}) == Point{1.0, 0.0});
  CHECK(nearest_neighbor_cf({0.0, 0.0}, {{-1.0, 0.0}, {1.0, 0.0}}) == Point{-1.0, 0.0});
  CHECK_THROWS_AS(nearest_neighbor_cf({0.0}, {}), InvalidArgument);
  CHECK_THROWS_AS(nearest_neighbor_cf({0.0}, {{1.0, 2.0}}), DimensionMismatch);
}
