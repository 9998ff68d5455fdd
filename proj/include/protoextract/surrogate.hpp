#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "protoextract/barycenter.hpp"
#include "protoextract/oracle.hpp"

namespace protoextract {

/// Query answers regrouped for fitting. d0/d1 hold inputs by predicted
/// class; d_cf holds the counterfactual attached to each d0 entry, so
/// |d_cf| == |d0|. Downstream, d_cf carries the soft label 0.5.
struct QueryDataset {
  std::vector<Point> d0;
  std::vector<Point> d1;
  std::vector<Point> d_cf;
};

/// Regroups oracle responses; rejects malformed ones (a class-0 response
/// without a counterfactual, or a class-1 response with one).
QueryDataset build_query_dataset(const std::vector<std::pair<Point, QueryResponse>>& responses);

/// Nearest-prototype classifier with an abstention band of width tau.
struct PrototypeSurrogate {
  PrototypePair prototypes;
  double tau = 0.0;
};

/// Decision rule: with a = W2(delta_x, q0) and b = W2(delta_x, q1), class 0
/// when a < b - tau, class 1 when b < a - tau; inside the band fall back to
/// the nearest prototype with ties to class 1, mirroring the target's >=
/// threshold convention.
int predict_prototype(const PrototypeSurrogate& s, const Point& x);

/// Logistic surrogate that treats counterfactuals as ordinary class-1
/// samples: trains on d0 labeled 0 and d1 united with d_cf labeled 1.
LinearModel fit_baseline1(const QueryDataset& qd, const LogisticTrainConfig& train_cfg);

using PredictFn = std::function<int(const Point&)>;

/// Fraction of d_ref on which the surrogate agrees with the target's label.
double fidelity(const LinearModel& target, const PredictFn& surrogate_predict,
                const std::vector<Point>& d_ref);

std::string surrogate_to_json(const PrototypeSurrogate& s);
PrototypeSurrogate surrogate_from_json(const std::string& text);
void save_surrogate(const PrototypeSurrogate& s, const std::string& path);
PrototypeSurrogate load_surrogate(const std::string& path);

}  // namespace protoextract
