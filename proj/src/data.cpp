#include "protoextract/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "protoextract/errors.hpp"
#include "protoextract/rng.hpp"

namespace protoextract {

CsvSchema schema_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schema parse error: ") + e.what());
  }
  static const char* known[] = {"target", "positive_label", "categorical", "features", "note"};
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return key == k; }) == std::end(known)) {
      throw ConfigError("schema: unknown key '" + key + "'");
    }
  }
  CsvSchema s;
  try {
    s.target = j.at("target").get<std::string>();
    s.positive_label = j.at("positive_label").get<std::string>();
    if (j.contains("categorical")) s.categorical = j["categorical"].get<std::vector<std::string>>();
    if (j.contains("features")) s.features = j["features"].get<std::vector<std::string>>();
    if (j.contains("note")) s.note = j["note"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schema field error: ") + e.what());
  }
  if (s.target.empty()) throw ConfigError("schema: target must be non-empty");
  return s;
}

CsvSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return schema_from_json(buf.str());
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool is_missing(const std::string& v) { return v.empty() || v == "?" || v == "NA"; }

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema, LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);

  std::string line;
  if (!std::getline(in, line)) throw IoError("empty file: " + path);
  const auto header = split_line(line);

  std::unordered_map<std::string, std::size_t> col_index;
  for (std::size_t i = 0; i < header.size(); ++i) col_index[header[i]] = i;

  const auto find_col = [&](const std::string& name) {
    const auto it = col_index.find(name);
    if (it == col_index.end()) {
      throw ConfigError("column '" + name + "' not found in " + path);
    }
    return it->second;
  };

  const std::size_t target_col = find_col(schema.target);
  for (const auto& c : schema.categorical) find_col(c);

  std::vector<std::string> feature_names;
  if (schema.features.empty()) {
    for (const auto& h : header) {
      if (h != schema.target) feature_names.push_back(h);
    }
  } else {
    for (const auto& f : schema.features) {
      if (f == schema.target) throw ConfigError("schema: feature list contains the target column");
      find_col(f);
      feature_names.push_back(f);
    }
  }
  if (feature_names.empty()) throw ConfigError("schema: no feature columns left for " + path);

  std::vector<std::size_t> feature_cols;
  std::vector<char> categorical;
  for (const auto& f : feature_names) {
    feature_cols.push_back(col_index[f]);
    categorical.push_back(std::find(schema.categorical.begin(), schema.categorical.end(), f) !=
                          schema.categorical.end());
  }

  Dataset ds;
  ds.feature_names = feature_names;
  ds.categorical_mask = categorical;
  LoadReport rep;
  rep.note = schema.note;

  // First-appearance ordinal codes per categorical column.
  std::vector<std::unordered_map<std::string, double>> codes(feature_cols.size());

  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++rep.rows_read;
    const auto fields = split_line(line);
    if (fields.size() != header.size()) {
      ++rep.rows_unparseable;
      continue;
    }
    bool missing = false;
    for (std::size_t f = 0; f < feature_cols.size() && !missing; ++f) {
      missing = is_missing(fields[feature_cols[f]]);
    }
    if (is_missing(fields[target_col])) missing = true;
    if (missing) {
      ++rep.rows_dropped_missing;
      continue;
    }

    // Numeric columns are validated before any categorical code is handed
    // out, so rejected rows cannot shift the first-appearance encoding.
    Point row(feature_cols.size());
    bool parse_ok = true;
    for (std::size_t f = 0; f < feature_cols.size() && parse_ok; ++f) {
      if (categorical[f]) continue;
      const std::string& raw = fields[feature_cols[f]];
      try {
        std::size_t used = 0;
        row[f] = std::stod(raw, &used);
        if (used != raw.size() || !std::isfinite(row[f])) parse_ok = false;
      } catch (...) {
        parse_ok = false;
      }
    }
    if (!parse_ok) {
      ++rep.rows_unparseable;
      continue;
    }
    for (std::size_t f = 0; f < feature_cols.size(); ++f) {
      if (!categorical[f]) continue;
      const std::string& raw = fields[feature_cols[f]];
      const auto [it, inserted] = codes[f].try_emplace(raw, static_cast<double>(codes[f].size()));
      row[f] = it->second;
    }
    ds.features.push_back(std::move(row));
    ds.labels.push_back(fields[target_col] == schema.positive_label ? 1 : 0);
  }

  if (rep.rows_read == 0) throw IoError("no data rows in " + path);
  if (rep.rows_unparseable * 20 > rep.rows_read) {
    throw IoError("more than 5% unparseable rows in " + path + " (" +
                  std::to_string(rep.rows_unparseable) + " of " + std::to_string(rep.rows_read) + ")");
  }
  if (ds.features.empty()) throw IoError("all rows dropped while loading " + path);
  rep.rows_kept = ds.features.size();

  // Min-max scale each column to [0,1]; constant columns map to 0.
  const std::size_t d = feature_cols.size();
  for (std::size_t f = 0; f < d; ++f) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const Point& r : ds.features) {
      lo = std::min(lo, r[f]);
      hi = std::max(hi, r[f]);
    }
    const double range = hi - lo;
    for (Point& r : ds.features) r[f] = range > 0.0 ? (r[f] - lo) / range : 0.0;
  }

  if (report != nullptr) *report = rep;
  return ds;
}

Dataset balance_classes(const Dataset& ds, std::uint64_t seed) {
  std::vector<std::size_t> idx0, idx1;
  for (std::size_t i = 0; i < ds.size(); ++i) (ds.labels[i] == 0 ? idx0 : idx1).push_back(i);
  if (idx0.empty() || idx1.empty()) {
    throw InvalidArgument("balance_classes: both classes required");
  }
  if (idx0.size() == idx1.size()) return ds;

  auto& majority = idx0.size() > idx1.size() ? idx0 : idx1;
  const std::size_t keep = std::min(idx0.size(), idx1.size());
  std::mt19937_64 rng(seed);
  std::shuffle(majority.begin(), majority.end(), rng);
  majority.resize(keep);

  std::vector<std::size_t> all;
  all.insert(all.end(), idx0.begin(), idx0.end());
  all.insert(all.end(), idx1.begin(), idx1.end());
  std::sort(all.begin(), all.end());  // keep original row order

  Dataset out;
  out.feature_names = ds.feature_names;
  out.categorical_mask = ds.categorical_mask;
  for (std::size_t i : all) {
    out.features.push_back(ds.features[i]);
    out.labels.push_back(ds.labels[i]);
  }
  return out;
}

SplitResult split(const Dataset& ds, const SplitSpec& spec) {
  if (!(spec.train_frac > 0.0 && spec.query_frac > 0.0 && spec.ref_frac > 0.0)) {
    throw InvalidArgument("split: every fraction must be > 0");
  }
  if (std::abs(spec.train_frac + spec.query_frac + spec.ref_frac - 1.0) > 1e-9) {
    throw InvalidArgument("split: fractions must sum to 1");
  }
  const std::size_t n = ds.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(spec.seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  const auto n_train =
      static_cast<std::size_t>(std::llround(spec.train_frac * static_cast<double>(n)));
  const auto n_query =
      static_cast<std::size_t>(std::llround(spec.query_frac * static_cast<double>(n)));
  if (n_train == 0 || n_query == 0 || n_train + n_query >= n) {
    throw InvalidArgument("split: a part would be empty");
  }

  const auto take = [&](std::size_t begin, std::size_t end) {
    Dataset part;
    part.feature_names = ds.feature_names;
    part.categorical_mask = ds.categorical_mask;
    for (std::size_t i = begin; i < end; ++i) {
      part.features.push_back(ds.features[idx[i]]);
      part.labels.push_back(ds.labels[idx[i]]);
    }
    return part;
  };

  SplitResult out;
  out.train = take(0, n_train);
  out.query_pool = take(n_train, n_train + n_query);
  out.ref = take(n_train + n_query, n);
  return out;
}

Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.n < 4) throw InvalidArgument("make_synthetic: n must be >= 4");
  if (spec.d < 1) throw InvalidArgument("make_synthetic: d must be >= 1");
  if (spec.separation < 0.0) throw InvalidArgument("make_synthetic: separation must be >= 0");

  Dataset ds;
  for (std::size_t f = 0; f < spec.d; ++f) {
    ds.feature_names.push_back("x" + std::to_string(f));
    ds.categorical_mask.push_back(0);
  }
  std::mt19937_64 rng(spec.seed);

  if (spec.kind == SyntheticKind::GaussianBlobs) {
    std::normal_distribution<double> g(0.0, 1.0);
    const std::size_t n0 = spec.n / 2;
    for (std::size_t i = 0; i < spec.n; ++i) {
      const int label = i < n0 ? 0 : 1;
      Point p(spec.d);
      for (double& c : p) c = g(rng);
      p[0] += (label == 1 ? 0.5 : -0.5) * spec.separation;
      ds.features.push_back(std::move(p));
      ds.labels.push_back(label);
    }
    for (std::size_t f = 0; f < spec.d; ++f) {
      double lo = ds.features[0][f], hi = lo;
      for (const Point& r : ds.features) {
        lo = std::min(lo, r[f]);
        hi = std::max(hi, r[f]);
      }
      const double range = hi - lo;
      for (Point& r : ds.features) r[f] = range > 0.0 ? (r[f] - lo) / range : 0.0;
    }
    return ds;
  }

  // linear_margin: rejection-sample the band away. The scaled band width
  // must leave something to sample.
  const double half_band = 0.5 * spec.separation;
  const double max_score = 0.5 * std::sqrt(static_cast<double>(spec.d));
  if (half_band >= 0.9 * max_score) {
    throw InvalidArgument("make_synthetic: separation too wide for linear_margin in d=" +
                          std::to_string(spec.d));
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(spec.d));
  std::size_t attempts = 0;
  const std::size_t max_attempts = 1000 * spec.n + 1000;
  while (ds.features.size() < spec.n) {
    if (++attempts > max_attempts) {
      throw NumericFailure("make_synthetic: rejection sampling failed to fill the request");
    }
    Point p(spec.d);
    for (double& c : p) c = u(rng);
    double s = 0.0;
    for (double c : p) s += (c - 0.5) * inv_sqrt_d;
    if (std::abs(s) < half_band) continue;
    ds.features.push_back(std::move(p));
    ds.labels.push_back(s >= 0.0 ? 1 : 0);
  }
  return ds;
}

}  // namespace protoextract
