#include "protoextract/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "protoextract/errors.hpp"

namespace protoextract {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Mean log loss plus (l2/2)*||w||^2, numerically stable for large |z|.
double logistic_loss(const std::vector<Point>& x, const std::vector<int>& y,
                     const std::vector<double>& theta, double l2) {
  const std::size_t d = theta.size() - 1;
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z = theta[d];
    for (std::size_t c = 0; c < d; ++c) z += theta[c] * x[i][c];
    loss += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - y[i] * z;
  }
  loss /= static_cast<double>(x.size());
  for (std::size_t c = 0; c < d; ++c) loss += 0.5 * l2 * theta[c] * theta[c];
  return loss;
}

// Gaussian elimination with partial pivoting; solves in place.
std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    if (std::abs(a[pivot][col]) < 1e-14) throw NumericFailure("train_logistic: singular Newton system");
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t row = n; row-- > 0;) {
    double s = b[row];
    for (std::size_t c = row + 1; c < n; ++c) s -= a[row][c] * x[c];
    x[row] = s / a[row][row];
  }
  return x;
}

}  // namespace

LinearModel train_logistic(const std::vector<Point>& features, const std::vector<int>& labels,
                           const LogisticTrainConfig& cfg) {
  if (features.empty()) throw InvalidArgument("train_logistic: empty training set");
  if (features.size() != labels.size()) {
    throw InvalidArgument("train_logistic: features/labels length mismatch");
  }
  if (cfg.l2 < 0.0) throw InvalidArgument("train_logistic: l2 must be >= 0");
  const std::size_t n = features.size();
  const std::size_t d = features.front().size();
  bool has0 = false, has1 = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() != d) throw DimensionMismatch("train_logistic: mixed feature dimensions");
    if (!all_finite(features[i])) throw InvalidArgument("train_logistic: non-finite feature value");
    if (labels[i] == 0) {
      has0 = true;
    } else if (labels[i] == 1) {
      has1 = true;
    } else {
      throw InvalidArgument("train_logistic: labels must be 0 or 1");
    }
  }
  if (!has0 || !has1) throw InvalidArgument("train_logistic: both classes required");

  // theta = (w_0..w_{d-1}, b)
  std::vector<double> theta(d + 1, 0.0);
  double loss = logistic_loss(features, labels, theta, cfg.l2);

  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    std::vector<double> grad(d + 1, 0.0);
    std::vector<std::vector<double>> hess(d + 1, std::vector<double>(d + 1, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      double z = theta[d];
      for (std::size_t c = 0; c < d; ++c) z += theta[c] * features[i][c];
      const double p = sigmoid(z);
      const double r = p - labels[i];
      const double s = std::max(p * (1.0 - p), 1e-12);
      for (std::size_t a = 0; a < d; ++a) {
        grad[a] += r * features[i][a];
        for (std::size_t b = a; b < d; ++b) hess[a][b] += s * features[i][a] * features[i][b];
        hess[a][d] += s * features[i][a];
      }
      grad[d] += r;
      hess[d][d] += s;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t a = 0; a <= d; ++a) grad[a] *= inv_n;
    for (std::size_t a = 0; a <= d; ++a) {
      for (std::size_t b = a; b <= d; ++b) {
        hess[a][b] *= inv_n;
        hess[b][a] = hess[a][b];
      }
    }
    for (std::size_t a = 0; a < d; ++a) {
      grad[a] += cfg.l2 * theta[a];
      hess[a][a] += cfg.l2;
    }

    double gmax = 0.0;
    for (double g : grad) gmax = std::max(gmax, std::abs(g));
    if (gmax <= cfg.tol) break;

    const auto step = solve_dense(hess, grad);
    double scale = 1.0;
    bool accepted = false;
    for (int half = 0; half < 40; ++half) {
      std::vector<double> trial(d + 1);
      for (std::size_t a = 0; a <= d; ++a) trial[a] = theta[a] - scale * step[a];
      const double trial_loss = logistic_loss(features, labels, trial, cfg.l2);
      if (std::isfinite(trial_loss) && trial_loss <= loss + 1e-15) {
        theta = std::move(trial);
        loss = trial_loss;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;  // no descent direction left at this precision
  }

  LinearModel model;
  model.weights.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(d));
  model.bias = theta[d];
  return model;
}

double predict_proba(const LinearModel& model, const Point& x) {
  if (model.weights.size() != x.size()) {
    throw DimensionMismatch("predict_proba: model dimension " + std::to_string(model.weights.size()) +
                            " vs point dimension " + std::to_string(x.size()));
  }
  return sigmoid(dot(model.weights, x) + model.bias);
}

int predict_label(const LinearModel& model, const Point& x) {
  return predict_proba(model, x) >= 0.5 ? 1 : 0;
}

std::string model_to_json(const LinearModel& model) {
  nlohmann::ordered_json j;
  j["weights"] = model.weights;
  j["bias"] = model.bias;
  return j.dump(2);
}

LinearModel model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("model JSON parse error: ") + e.what());
  }
  if (!j.contains("weights") || !j.contains("bias")) {
    throw IoError("model JSON must contain 'weights' and 'bias'");
  }
  LinearModel m;
  try {
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("model JSON field error: ") + e.what());
  }
  if (!all_finite(m.weights) || !std::isfinite(m.bias)) {
    throw IoError("model JSON contains non-finite values");
  }
  return m;
}

void save_model(const LinearModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << model_to_json(model) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

LinearModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

namespace {

std::string format_point(const Point& x) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << "]";
  return os.str();
}

}  // namespace

QueryResponse query(const LinearModel& model, const CfGenerator& cf_generator, const Point& x,
                    std::atomic<std::uint64_t>& counter) {
  counter.fetch_add(1, std::memory_order_relaxed);
  QueryResponse r;
  r.label = predict_label(model, x);
  if (r.label == 0) {
    Point cf;
    try {
      cf = cf_generator(model, x);
    } catch (const std::exception& e) {
      throw NumericFailure(std::string("query: counterfactual generation failed at x=") +
                           format_point(x) + ": " + e.what());
    }
    if (predict_label(model, cf) != 1) {
      throw NumericFailure("query: generator returned an invalid counterfactual for x=" +
                           format_point(x));
    }
    r.counterfactual = std::move(cf);
  }
  return r;
}

Oracle::Oracle(LinearModel model, CfGenerator cf_generator)
    : model_(std::move(model)), gen_(std::move(cf_generator)) {
  if (!gen_) throw InvalidArgument("Oracle: counterfactual generator required");
}

QueryResponse Oracle::query(const Point& x) { return protoextract::query(model_, gen_, x, count_); }

}  // namespace protoextract
