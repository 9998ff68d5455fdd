#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <random>
#include <thread>

#include "protoextract/errors.hpp"
#include "protoextract/oracle.hpp"

using namespace protoextract;

namespace {

// Valid-by-construction generator for tests: walk along +w far past the
// boundary.
Point crude_cf(const LinearModel& m, const Point& x) {
  Point out = x;
  const double z = [&] {
    double s = m.bias;
    for (std::size_t c = 0; c < x.size(); ++c) s += m.weights[c] * x[c];
    return s;
  }();
  double wn2 = 0.0;
  for (double w : m.weights) wn2 += w * w;
  const double shift = (1.0 - z) / wn2;
  for (std::size_t c = 0; c < out.size(); ++c) out[c] += shift * m.weights[c];
  return out;
}

}  // namespace

TEST_CASE("symmetric 1-D training lands on the midpoint") {
  const auto model = train_logistic({{-1.0}, {1.0}}, {0, 1}, {.l2 = 0.1});
  CHECK(model.weights[0] > 0.0);
  CHECK(std::abs(model.bias) < 1e-9);
  CHECK(predict_proba(model, {0.0}) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("separable blobs are fit to full training accuracy") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.4);
  std::vector<Point> xs;
  std::vector<int> ys;
  for (int i = 0; i < 50; ++i) {
    xs.push_back({-2.0 + g(rng), g(rng)});
    ys.push_back(0);
    xs.push_back({2.0 + g(rng), g(rng)});
    ys.push_back(1);
  }
  const auto model = train_logistic(xs, ys, {.l2 = 0.01});
  int correct = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) correct += predict_label(model, xs[i]) == ys[i];
  CHECK(correct == static_cast<int>(xs.size()));
}

TEST_CASE("duplicating every row leaves the fit unchanged") {
  std::vector<Point> xs = {{0.1, 0.9}, {0.4, 0.2}, {0.8, 0.7}, {0.9, 0.1}};
  std::vector<int> ys = {0, 0, 1, 1};
  const auto base = train_logistic(xs, ys, {});
  std::vector<Point> xs2 = xs;
  std::vector<int> ys2 = ys;
  xs2.insert(xs2.end(), xs.begin(), xs.end());
  ys2.insert(ys2.end(), ys.begin(), ys.end());
  const auto doubled = train_logistic(xs2, ys2, {});
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(std::abs(base.weights[c] - doubled.weights[c]) < 1e-8);
  }
  CHECK(std::abs(base.bias - doubled.bias) < 1e-8);
}

TEST_CASE("training input validation") {
  CHECK_THROWS_AS(train_logistic({}, {}, {}), InvalidArgument);
  CHECK_THROWS_AS(train_logistic({{1.0}}, {1}, {}), InvalidArgument);
  CHECK_THROWS_AS(train_logistic({{1.0}, {2.0}}, {1, 2}, {}), InvalidArgument);
  CHECK_THROWS_AS(train_logistic({{1.0}, {2.0}}, {1}, {}), InvalidArgument);
  CHECK_THROWS_AS(train_logistic({{1.0}, {2.0, 3.0}}, {0, 1}, {}), DimensionMismatch);
  CHECK_THROWS_AS(train_logistic({{std::nan("")}, {2.0}}, {0, 1}, {}), InvalidArgument);
}

TEST_CASE("probability and label closed forms") {
  const LinearModel zero{{0.0}, 0.0};
  CHECK(predict_proba(zero, {3.7}) == doctest::Approx(0.5));

  const LinearModel unit{{1.0}, 0.0};
  CHECK(predict_proba(unit, {0.0}) == doctest::Approx(0.5));
  CHECK(predict_proba(unit, {std::log(3.0)}) == doctest::Approx(0.75));

  CHECK(predict_label(unit, {0.0}) == 1);  // exact tie goes to class 1
  CHECK(predict_label(unit, {-0.05}) == 0);
  CHECK(predict_label(unit, {0.05}) == 1);
  CHECK_THROWS_AS(predict_proba(unit, {1.0, 2.0}), DimensionMismatch);
}

TEST_CASE("model JSON round trip") {
  const LinearModel m{{0.123456789012345, -7.5e-3}, 2.25};
  const auto back = model_from_json(model_to_json(m));
  CHECK(back.weights == m.weights);
  CHECK(back.bias == m.bias);

  const char* path = "test_model_roundtrip.json";
  save_model(m, path);
  const auto loaded = load_model(path);
  CHECK(loaded.weights == m.weights);
  CHECK(loaded.bias == m.bias);
  std::remove(path);

  CHECK_THROWS_AS(load_model("does_not_exist.json"), IoError);
  CHECK_THROWS_AS(model_from_json("not json"), IoError);
  CHECK_THROWS_AS(model_from_json("{\"weights\": [1.0]}"), IoError);
  CHECK_THROWS_AS(model_from_json("{\"weights\": [1.0], \"bias\": \"x\"}"), IoError);
}

TEST_CASE("query protocol attaches counterfactuals one-sidedly") {
  const LinearModel model{{1.0, 0.0}, 0.0};
  std::atomic<std::uint64_t> counter{0};

  const auto pos = query(model, crude_cf, {3.0, 0.0}, counter);
  CHECK(pos.label == 1);
  CHECK(!pos.counterfactual.has_value());

  const auto neg = query(model, crude_cf, {-3.0, 0.5}, counter);
  CHECK(neg.label == 0);
  REQUIRE(neg.counterfactual.has_value());
  CHECK(predict_label(model, *neg.counterfactual) == 1);
  CHECK(counter.load() == 2);
}

TEST_CASE("query rejects invalid and failing generators") {
  const LinearModel model{{1.0}, 0.0};
  std::atomic<std::uint64_t> counter{0};

  const CfGenerator echo = [](const LinearModel&, const Point& x) { return x; };
  CHECK_THROWS_AS(query(model, echo, {-1.0}, counter), NumericFailure);

  const CfGenerator boom = [](const LinearModel&, const Point&) -> Point {
    throw NumericFailure("no convergence");
  };
  try {
    query(model, boom, {-1.5}, counter);
    FAIL("expected NumericFailure");
  } catch (const NumericFailure& e) {
    // The failure must carry the offending input.
    CHECK(std::string(e.what()).find("-1.5") != std::string::npos);
  }
  CHECK(counter.load() == 2);
}

TEST_CASE("oracle counts queries exactly, including concurrent ones") {
  Oracle oracle(LinearModel{{1.0}, 0.0}, crude_cf);
  for (int i = 0; i < 500; ++i) {
    const auto r = oracle.query({i % 2 == 0 ? 1.0 : -1.0});
    CHECK((r.label == 1) == (i % 2 == 0));
    CHECK(r.counterfactual.has_value() == (r.label == 0));
  }
  CHECK(oracle.query_count() == 500);

  Oracle shared(LinearModel{{1.0}, 0.0}, crude_cf);
  std::vector<std::thread> workers;
  for (int t = 0; t < 4; ++t) {
    workers.emplace_back([&shared] {
      for (int i = 0; i < 250; ++i) shared.query({2.0});
    });
  }
  for (auto& w : workers) w.join();
  CHECK(shared.query_count() == 1000);
}
