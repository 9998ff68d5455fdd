#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "protoextract/point.hpp"

namespace protoextract {

/// Logistic-regression parameters; the decision score is w . x + b.
struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
};

struct LogisticTrainConfig {
  double l2 = 1e-2;  // coefficient of (l2/2)*||w||^2; the bias is not penalized
  std::size_t max_iters = 200;
  double tol = 1e-8;  // gradient infinity-norm stop
  std::uint64_t seed = 0;  // unused by the deterministic trainer; kept for interface stability
};

/// Full-batch damped Newton on the mean log loss. Deterministic: zero init,
/// no sampling.
LinearModel train_logistic(const std::vector<Point>& features, const std::vector<int>& labels,
                           const LogisticTrainConfig& cfg = {});

double predict_proba(const LinearModel& model, const Point& x);

/// 1 iff predict_proba >= 0.5; an exact tie maps to class 1.
int predict_label(const LinearModel& model, const Point& x);

std::string model_to_json(const LinearModel& model);
LinearModel model_from_json(const std::string& text);
void save_model(const LinearModel& model, const std::string& path);
LinearModel load_model(const std::string& path);

/// One oracle answer. The counterfactual is present iff label == 0, and is
/// always classified 1 by the target.
struct QueryResponse {
  int label = 0;
  std::optional<Point> counterfactual;
};

using CfGenerator = std::function<Point(const LinearModel&, const Point&)>;

/// Single query against the target: bumps the counter, labels x, and for a
/// class-0 prediction attaches a validity-checked counterfactual.
QueryResponse query(const LinearModel& model, const CfGenerator& cf_generator, const Point& x,
                    std::atomic<std::uint64_t>& counter);

/// Owns the target model so extraction code can only interact through
/// query(); the model itself stays out of reach.
class Oracle {
 public:
  Oracle(LinearModel model, CfGenerator cf_generator);

  QueryResponse query(const Point& x);
  std::uint64_t query_count() const { return count_.load(); }

 private:
  LinearModel model_;
  CfGenerator gen_;
  std::atomic<std::uint64_t> count_{0};
};

}  // namespace protoextract
