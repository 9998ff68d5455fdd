#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "protoextract/data.hpp"
#include "protoextract/errors.hpp"

using namespace protoextract;

namespace {

struct TempCsv {
  std::string path;
  explicit TempCsv(const std::string& name, const std::string& content) : path(name) {
    std::ofstream out(path);
    out << content;
  }
  ~TempCsv() { std::remove(path.c_str()); }
};

CsvSchema basic_schema() {
  CsvSchema s;
  s.target = "y";
  s.positive_label = "yes";
  return s;
}

}  // namespace

TEST_CASE("csv loading with min-max scaling") {
  TempCsv file("t_basic.csv",
               "a,b,y\n"
               "10,5,yes\n"
               "20,5,no\n"
               "30,5,yes\n");
  LoadReport rep;
  const auto ds = load_csv(file.path, basic_schema(), &rep);
  REQUIRE(ds.size() == 3);
  REQUIRE(ds.dim() == 2);
  CHECK(ds.features[0][0] == 0.0);
  CHECK(ds.features[1][0] == 0.5);
  CHECK(ds.features[2][0] == 1.0);
  // Constant column maps to 0.
  CHECK(ds.features[0][1] == 0.0);
  CHECK(ds.features[2][1] == 0.0);
  CHECK(ds.labels == std::vector<int>{1, 0, 1});
  CHECK(rep.rows_read == 3);
  CHECK(rep.rows_kept == 3);
}

TEST_CASE("categorical columns encode by first appearance") {
  TempCsv file("t_cat.csv",
               "color,y\n"
               "red,yes\n"
               "blue,no\n"
               "red,no\n"
               "green,yes\n");
  auto schema = basic_schema();
  schema.categorical = {"color"};
  const auto ds = load_csv(file.path, schema);
  // Codes red=0, blue=1, green=2, then scaled by max 2.
  CHECK(ds.features[0][0] == 0.0);
  CHECK(ds.features[1][0] == doctest::Approx(0.5));
  CHECK(ds.features[2][0] == 0.0);
  CHECK(ds.features[3][0] == 1.0);
  CHECK(ds.categorical_mask == std::vector<char>{1});
}

TEST_CASE("missing and unparseable rows") {
  TempCsv file("t_missing.csv",
               "a,b,y\n"
               "1,2,yes\n"
               "?,2,no\n"
               "3,,no\n"
               "4,5,NA\n"
               "6,7,no\n");
  LoadReport rep;
  const auto ds = load_csv(file.path, basic_schema(), &rep);
  CHECK(ds.size() == 2);
  CHECK(rep.rows_read == 5);
  CHECK(rep.rows_dropped_missing == 3);
  CHECK(rep.rows_unparseable == 0);

  // 1 garbage row of 24 stays under the 5% threshold.
  std::string many = "a,y\n";
  for (int i = 0; i < 23; ++i) many += std::to_string(i) + ",yes\n";
  many += "junk_value,no\n";
  TempCsv ok("t_under.csv", many);
  LoadReport rep2;
  const auto ds2 = load_csv(ok.path, basic_schema(), &rep2);
  CHECK(ds2.size() == 23);
  CHECK(rep2.rows_unparseable == 1);

  // 1 of 10 breaches it.
  std::string bad = "a,y\n";
  for (int i = 0; i < 9; ++i) bad += std::to_string(i) + ",yes\n";
  bad += "junk_value,no\n";
  TempCsv broken("t_over.csv", bad);
  CHECK_THROWS_AS(load_csv(broken.path, basic_schema()), IoError);
}

TEST_CASE("csv structural errors") {
  auto schema = basic_schema();
  CHECK_THROWS_AS(load_csv("no_such_file.csv", schema), IoError);

  TempCsv empty("t_empty.csv", "");
  CHECK_THROWS_AS(load_csv(empty.path, schema), IoError);

  TempCsv headers_only("t_headers.csv", "a,b,y\n");
  CHECK_THROWS_AS(load_csv(headers_only.path, schema), IoError);

  TempCsv no_target("t_notarget.csv", "a,b\n1,2\n");
  CHECK_THROWS_AS(load_csv(no_target.path, schema), ConfigError);

  TempCsv plain("t_plain.csv", "a,y\n1,yes\n2,no\n");
  auto bad_cat = schema;
  bad_cat.categorical = {"nope"};
  CHECK_THROWS_AS(load_csv(plain.path, bad_cat), ConfigError);
  auto bad_feat = schema;
  bad_feat.features = {"nope"};
  CHECK_THROWS_AS(load_csv(plain.path, bad_feat), ConfigError);
  auto self_feat = schema;
  self_feat.features = {"y"};
  CHECK_THROWS_AS(load_csv(plain.path, self_feat), ConfigError);
}

TEST_CASE("feature subsetting follows the schema") {
  TempCsv file("t_subset.csv",
               "a,b,c,y\n"
               "1,10,100,yes\n"
               "2,20,200,no\n"
               "3,30,300,yes\n");
  auto schema = basic_schema();
  schema.features = {"c", "a"};
  const auto ds = load_csv(file.path, schema);
  CHECK(ds.feature_names == std::vector<std::string>{"c", "a"});
  CHECK(ds.dim() == 2);
  CHECK(ds.features[1][0] == 0.5);
}

TEST_CASE("schema JSON parsing") {
  const auto s = schema_from_json(R"({
    "target": "income", "positive_label": ">50K",
    "categorical": ["workclass"], "note": "hello"})");
  CHECK(s.target == "income");
  CHECK(s.positive_label == ">50K");
  CHECK(s.categorical == std::vector<std::string>{"workclass"});
  CHECK(s.note == "hello");

  CHECK_THROWS_AS(schema_from_json("{"), ConfigError);
  CHECK_THROWS_AS(schema_from_json(R"({"target": "y"})"), ConfigError);
  CHECK_THROWS_AS(schema_from_json(R"({"target": "y", "positive_label": "1", "oops": 3})"),
                  ConfigError);
  CHECK_THROWS_AS(load_schema("missing_schema.json"), IoError);
}

TEST_CASE("class balancing") {
  Dataset ds;
  for (int i = 0; i < 100; ++i) {
    ds.features.push_back({static_cast<double>(i)});
    ds.labels.push_back(i < 60 ? 0 : 1);
  }
  const auto bal = balance_classes(ds, 3);
  CHECK(bal.size() == 80);
  CHECK(std::count(bal.labels.begin(), bal.labels.end(), 0) == 40);
  CHECK(std::count(bal.labels.begin(), bal.labels.end(), 1) == 40);

  const auto again = balance_classes(ds, 3);
  CHECK(again.features == bal.features);

  const auto other_seed = balance_classes(ds, 4);
  CHECK(other_seed.features != bal.features);

  const auto balanced_in = balance_classes(bal, 9);
  CHECK(balanced_in.features == bal.features);

  Dataset single;
  single.features = {{1.0}};
  single.labels = {1};
  CHECK_THROWS_AS(balance_classes(single, 0), InvalidArgument);
}

TEST_CASE("splitting partitions the rows") {
  Dataset ds;
  for (int i = 0; i < 100; ++i) {
    ds.features.push_back({static_cast<double>(i)});
    ds.labels.push_back(i % 2);
  }
  SplitSpec spec;
  spec.train_frac = 0.6;
  spec.query_frac = 0.2;
  spec.ref_frac = 0.2;
  spec.seed = 5;
  const auto parts = split(ds, spec);
  CHECK(parts.train.size() == 60);
  CHECK(parts.query_pool.size() == 20);
  CHECK(parts.ref.size() == 20);

  std::multiset<double> seen;
  for (const auto* part : {&parts.train, &parts.query_pool, &parts.ref}) {
    for (const auto& row : part->features) seen.insert(row[0]);
  }
  CHECK(seen.size() == 100);
  for (int i = 0; i < 100; ++i) CHECK(seen.count(static_cast<double>(i)) == 1);

  const auto parts2 = split(ds, spec);
  CHECK(parts2.train.features == parts.train.features);

  auto bad = spec;
  bad.train_frac = 1.0;
  bad.query_frac = 0.0;
  bad.ref_frac = 0.0;
  CHECK_THROWS_AS(split(ds, bad), InvalidArgument);
  bad.train_frac = 0.5;
  bad.query_frac = 0.3;
  bad.ref_frac = 0.3;
  CHECK_THROWS_AS(split(ds, bad), InvalidArgument);
}

TEST_CASE("gaussian blobs are separable and reproducible") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::GaussianBlobs;
  spec.n = 1000;
  spec.d = 3;
  spec.separation = 6.0;
  spec.seed = 12;
  const auto ds = make_synthetic(spec);
  REQUIRE(ds.size() == 1000);
  REQUIRE(ds.dim() == 3);
  for (const auto& row : ds.features) {
    for (double c : row) {
      CHECK(c >= 0.0);
      CHECK(c <= 1.0);
    }
  }

  // The generating rule (midpoint of the class-conditional means along the
  // first axis) classifies its own labels almost perfectly at separation 6.
  double m0 = 0.0, m1 = 0.0;
  int n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] == 0) {
      m0 += ds.features[i][0];
      ++n0;
    } else {
      m1 += ds.features[i][0];
      ++n1;
    }
  }
  m0 /= n0;
  m1 /= n1;
  const double mid = 0.5 * (m0 + m1);
  int correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    correct += (ds.features[i][0] >= mid ? 1 : 0) == ds.labels[i];
  }
  CHECK(correct > 990);

  const auto again = make_synthetic(spec);
  CHECK(again.features == ds.features);
  CHECK(again.labels == ds.labels);
}

TEST_CASE("linear margin removes the band and thresholds at the plane") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::LinearMargin;
  spec.n = 500;
  spec.d = 1;
  spec.separation = 0.2;
  spec.seed = 4;
  const auto ds = make_synthetic(spec);
  REQUIRE(ds.size() == 500);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double x = ds.features[i][0];
    CHECK(std::abs(x - 0.5) >= 0.1);
    CHECK(ds.labels[i] == (x > 0.5 ? 1 : 0));
  }

  CHECK_THROWS_AS(make_synthetic({SyntheticKind::LinearMargin, 100, 1, 2.0, 0}), InvalidArgument);
  CHECK_THROWS_AS(make_synthetic({SyntheticKind::GaussianBlobs, 3, 1, 1.0, 0}), InvalidArgument);
  CHECK_THROWS_AS(make_synthetic({SyntheticKind::GaussianBlobs, 100, 0, 1.0, 0}), InvalidArgument);
  CHECK_THROWS_AS(make_synthetic({SyntheticKind::GaussianBlobs, 100, 2, -1.0, 0}), InvalidArgument);
}
