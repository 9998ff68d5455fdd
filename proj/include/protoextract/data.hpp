#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "protoextract/point.hpp"

namespace protoextract {

/// Preprocessed tabular data: every feature lies in [0,1], labels are 0/1,
/// no NaN survives loading.
struct Dataset {
  std::vector<Point> features;
  std::vector<int> labels;
  std::vector<std::string> feature_names;
  std::vector<char> categorical_mask;  // per feature column

  std::size_t size() const { return features.size(); }
  std::size_t dim() const { return features.empty() ? 0 : features.front().size(); }
};

/// Sidecar description of a CSV: which column is the target, which raw value
/// maps to class 1, which columns are categorical, and (optionally) the
/// feature subset to keep. `note` is echoed in the load report.
struct CsvSchema {
  std::string target;
  std::string positive_label;
  std::vector<std::string> categorical;
  std::vector<std::string> features;  // empty = all non-target columns
  std::string note;
};

CsvSchema schema_from_json(const std::string& text);
CsvSchema load_schema(const std::string& path);

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t rows_kept = 0;
  std::size_t rows_dropped_missing = 0;
  std::size_t rows_unparseable = 0;
  std::string note;
};

/// Loads a comma-separated file with a header row. Categorical columns are
/// integer-encoded in order of first appearance, every column is min-max
/// scaled to [0,1] (constant columns map to 0), rows with missing fields
/// ("", "?", "NA") are dropped and counted. Unparseable rows above 5% of the
/// file abort the load.
Dataset load_csv(const std::string& path, const CsvSchema& schema, LoadReport* report = nullptr);

/// Subsamples the majority class without replacement down to the minority
/// size; already-balanced input comes back unchanged.
Dataset balance_classes(const Dataset& ds, std::uint64_t seed);

struct SplitSpec {
  double train_frac = 0.6;
  double query_frac = 0.2;
  double ref_frac = 0.2;
  std::uint64_t seed = 0;
};

struct SplitResult {
  Dataset train;
  Dataset query_pool;
  Dataset ref;
};

/// Disjoint row partition by shuffled indices, deterministic per seed; part
/// sizes are within one row of the requested fractions.
SplitResult split(const Dataset& ds, const SplitSpec& spec);

enum class SyntheticKind { GaussianBlobs, LinearMargin };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::GaussianBlobs;
  std::size_t n = 1000;
  std::size_t d = 2;
  double separation = 4.0;
  std::uint64_t seed = 0;
};

/// gaussian_blobs: two unit-variance isotropic Gaussians centered at
/// +-(separation/2) along the first axis, then min-max scaled to [0,1].
/// linear_margin: uniform points in [0,1]^d labeled by the diagonal
/// hyperplane through (0.5,...,0.5), with the band of width `separation`
/// around it removed by rejection.
Dataset make_synthetic(const SyntheticSpec& spec);

}  // namespace protoextract
