#include "protoextract/surrogate.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "protoextract/errors.hpp"
#include "protoextract/ot.hpp"

namespace protoextract {

QueryDataset build_query_dataset(const std::vector<std::pair<Point, QueryResponse>>& responses) {
  QueryDataset qd;
  for (const auto& [x, r] : responses) {
    if (r.label == 0) {
      if (!r.counterfactual.has_value()) {
        throw InvalidArgument("build_query_dataset: class-0 response without counterfactual");
      }
      qd.d0.push_back(x);
      qd.d_cf.push_back(*r.counterfactual);
    } else if (r.label == 1) {
      if (r.counterfactual.has_value()) {
        throw InvalidArgument("build_query_dataset: class-1 response carries a counterfactual");
      }
      qd.d1.push_back(x);
    } else {
      throw InvalidArgument("build_query_dataset: label must be 0 or 1");
    }
  }
  return qd;
}

namespace {

void check_surrogate(const PrototypeSurrogate& s) {
  if (s.tau < 0.0) throw InvalidArgument("prototype surrogate: tau must be >= 0");
  if (s.prototypes.objective_trace.empty()) {
    throw InvalidArgument("prototype surrogate: prototypes are not fitted (empty trace)");
  }
  s.prototypes.q0.validate();
  s.prototypes.q1.validate();
  if (s.prototypes.q0.dim() != s.prototypes.q1.dim()) {
    throw DimensionMismatch("prototype surrogate: prototype dimensions differ");
  }
}

}  // namespace

int predict_prototype(const PrototypeSurrogate& s, const Point& x) {
  check_surrogate(s);
  const double a = std::sqrt(dirac_distance_sq(x, s.prototypes.q0));
  const double b = std::sqrt(dirac_distance_sq(x, s.prototypes.q1));
  if (a < b - s.tau) return 0;
  if (b < a - s.tau) return 1;
  return b <= a ? 1 : 0;
}

LinearModel fit_baseline1(const QueryDataset& qd, const LogisticTrainConfig& train_cfg) {
  std::vector<Point> xs;
  std::vector<int> ys;
  xs.reserve(qd.d0.size() + qd.d1.size() + qd.d_cf.size());
  for (const Point& p : qd.d0) {
    xs.push_back(p);
    ys.push_back(0);
  }
  for (const Point& p : qd.d1) {
    xs.push_back(p);
    ys.push_back(1);
  }
  for (const Point& p : qd.d_cf) {
    xs.push_back(p);
    ys.push_back(1);
  }
  return train_logistic(xs, ys, train_cfg);
}

double fidelity(const LinearModel& target, const PredictFn& surrogate_predict,
                const std::vector<Point>& d_ref) {
  if (d_ref.empty()) throw InvalidArgument("fidelity: empty reference set");
  std::size_t agree = 0;
  for (const Point& x : d_ref) {
    if (surrogate_predict(x) == predict_label(target, x)) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(d_ref.size());
}

namespace {

nlohmann::ordered_json distribution_to_json(const DiscreteDistribution& d) {
  nlohmann::ordered_json j;
  j["support"] = d.support;
  j["weights"] = d.weights;
  return j;
}

DiscreteDistribution distribution_from_json(const nlohmann::json& j) {
  return DiscreteDistribution::make(j.at("support").get<std::vector<Point>>(),
                                    j.at("weights").get<std::vector<double>>());
}

}  // namespace

std::string surrogate_to_json(const PrototypeSurrogate& s) {
  check_surrogate(s);
  nlohmann::ordered_json j;
  j["q0"] = distribution_to_json(s.prototypes.q0);
  j["q1"] = distribution_to_json(s.prototypes.q1);
  j["tau"] = s.tau;
  j["objective_trace"] = s.prototypes.objective_trace;
  return j.dump(2);
}

PrototypeSurrogate surrogate_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("surrogate JSON parse error: ") + e.what());
  }
  PrototypeSurrogate s;
  try {
    s.prototypes.q0 = distribution_from_json(j.at("q0"));
    s.prototypes.q1 = distribution_from_json(j.at("q1"));
    s.tau = j.at("tau").get<double>();
    s.prototypes.objective_trace = j.at("objective_trace").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("surrogate JSON field error: ") + e.what());
  }
  check_surrogate(s);
  return s;
}

void save_surrogate(const PrototypeSurrogate& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << surrogate_to_json(s) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

PrototypeSurrogate load_surrogate(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return surrogate_from_json(buf.str());
}

}  // namespace protoextract
