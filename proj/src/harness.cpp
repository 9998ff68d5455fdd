#include "protoextract/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>
#include <utility>

#include <json.hpp>

#include "protoextract/errors.hpp"
#include "protoextract/rng.hpp"

namespace protoextract {

namespace {

using nlohmann::ordered_json;

// Per-trial derivation streams; split additionally folds the config's own
// split seed so distinct split streams stay reachable from one master seed.
constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kQueryOrderStream = 2;
constexpr std::uint64_t kPrototypeStream = 3;
constexpr std::uint64_t kBalanceStream = 0;

[[noreturn]] void bad_key(const std::string& path) {
  throw ConfigError("unknown config key \"" + path + "\"");
}

std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void check_keys(const ordered_json& obj, const std::string& prefix,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) bad_key(join_path(prefix, item.key()));
  }
}

double get_double(const ordered_json& obj, const std::string& prefix, const char* key,
                  double fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError("config key \"" + join_path(prefix, key) +
                                        "\": expected a number");
  return v.get<double>();
}

std::size_t get_size(const ordered_json& obj, const std::string& prefix, const char* key,
                     std::size_t fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                 v.get<std::int64_t>() < 0)) {
    throw ConfigError("config key \"" + join_path(prefix, key) +
                      "\": expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::uint64_t get_seed(const ordered_json& obj, const std::string& prefix, const char* key,
                       std::uint64_t fallback) {
  return get_size(obj, prefix, key, static_cast<std::size_t>(fallback));
}

bool get_bool(const ordered_json& obj, const std::string& prefix, const char* key,
              bool fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError("config key \"" + join_path(prefix, key) +
                                         "\": expected a boolean");
  return v.get<bool>();
}

std::string get_string(const ordered_json& obj, const std::string& prefix, const char* key,
                       const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_string()) throw ConfigError("config key \"" + join_path(prefix, key) +
                                        "\": expected a string");
  return v.get<std::string>();
}

void require_range(bool ok, const std::string& path, const char* what) {
  if (!ok) throw ConfigError("config key \"" + path + "\": " + what);
}

DatasetConfig parse_dataset(const ordered_json& j) {
  DatasetConfig out;
  if (j.is_null()) return out;
  if (!j.is_object()) throw ConfigError("config key \"dataset\": expected an object");
  check_keys(j, "dataset", {"source", "name", "csv_path", "schema_path", "balance", "synthetic"});
  const std::string source = get_string(j, "dataset", "source", "synthetic");
  if (source != "synthetic" && source != "csv") {
    throw ConfigError("config key \"dataset.source\": expected \"synthetic\" or \"csv\"");
  }
  out.synthetic = source == "synthetic";
  out.name = get_string(j, "dataset", "name", "");
  if (out.synthetic) {
    for (const char* key : {"csv_path", "schema_path", "balance"}) {
      if (j.contains(key)) {
        throw ConfigError("config key \"dataset." + std::string(key) +
                          "\": only valid when source is \"csv\"");
      }
    }
    if (j.contains("synthetic")) {
      const auto& s = j.at("synthetic");
      if (!s.is_object()) throw ConfigError("config key \"dataset.synthetic\": expected an object");
      check_keys(s, "dataset.synthetic", {"kind", "n", "d", "separation", "seed"});
      const std::string kind = get_string(s, "dataset.synthetic", "kind", "gaussian_blobs");
      if (kind == "gaussian_blobs") {
        out.spec.kind = SyntheticKind::GaussianBlobs;
      } else if (kind == "linear_margin") {
        out.spec.kind = SyntheticKind::LinearMargin;
      } else {
        throw ConfigError(
            "config key \"dataset.synthetic.kind\": expected \"gaussian_blobs\" or "
            "\"linear_margin\"");
      }
      out.spec.n = get_size(s, "dataset.synthetic", "n", out.spec.n);
      out.spec.d = get_size(s, "dataset.synthetic", "d", out.spec.d);
      out.spec.separation = get_double(s, "dataset.synthetic", "separation", out.spec.separation);
      out.spec.seed = get_seed(s, "dataset.synthetic", "seed", out.spec.seed);
      require_range(out.spec.n >= 4, "dataset.synthetic.n", "must be >= 4");
      require_range(out.spec.d >= 1, "dataset.synthetic.d", "must be >= 1");
      require_range(out.spec.separation >= 0.0, "dataset.synthetic.separation", "must be >= 0");
    }
  } else {
    if (j.contains("synthetic")) {
      throw ConfigError("config key \"dataset.synthetic\": only valid when source is \"synthetic\"");
    }
    out.csv_path = get_string(j, "dataset", "csv_path", "");
    out.schema_path = get_string(j, "dataset", "schema_path", "");
    out.balance = get_bool(j, "dataset", "balance", false);
    require_range(!out.csv_path.empty(), "dataset.csv_path", "required for source \"csv\"");
    require_range(!out.schema_path.empty(), "dataset.schema_path", "required for source \"csv\"");
  }
  return out;
}

SplitSpec parse_split(const ordered_json& j) {
  SplitSpec out;
  if (j.is_null()) return out;
  if (!j.is_object()) throw ConfigError("config key \"split\": expected an object");
  check_keys(j, "split", {"train_frac", "query_frac", "ref_frac", "seed"});
  out.train_frac = get_double(j, "split", "train_frac", out.train_frac);
  out.query_frac = get_double(j, "split", "query_frac", out.query_frac);
  out.ref_frac = get_double(j, "split", "ref_frac", out.ref_frac);
  out.seed = get_seed(j, "split", "seed", out.seed);
  require_range(out.train_frac > 0.0 && out.train_frac < 1.0, "split.train_frac",
                "must be in (0, 1)");
  require_range(out.query_frac > 0.0 && out.query_frac < 1.0, "split.query_frac",
                "must be in (0, 1)");
  require_range(out.ref_frac > 0.0 && out.ref_frac < 1.0, "split.ref_frac",
                "must be in (0, 1)");
  require_range(std::abs(out.train_frac + out.query_frac + out.ref_frac - 1.0) <= 1e-9,
                "split", "fractions must sum to 1");
  return out;
}

void parse_prototype(const ordered_json& j, ExperimentConfig& cfg) {
  if (j.is_null()) return;
  if (!j.is_object()) throw ConfigError("config key \"prototype\": expected an object");
  check_keys(j, "prototype", {"k", "lambda_c", "lambda_c0", "lambda_c1", "gamma",
                              "max_outer_iters", "tol", "reg_step", "tau"});
  PrototypeFitConfig& p = cfg.prototype;
  p.k = get_size(j, "prototype", "k", p.k);
  p.lambda_c = get_double(j, "prototype", "lambda_c", p.lambda_c);
  if (j.contains("lambda_c0") && !j.at("lambda_c0").is_null()) {
    p.lambda_c0 = get_double(j, "prototype", "lambda_c0", 0.0);
    require_range(*p.lambda_c0 >= 0.0, "prototype.lambda_c0", "must be >= 0");
  }
  if (j.contains("lambda_c1") && !j.at("lambda_c1").is_null()) {
    p.lambda_c1 = get_double(j, "prototype", "lambda_c1", 0.0);
    require_range(*p.lambda_c1 >= 0.0, "prototype.lambda_c1", "must be >= 0");
  }
  p.gamma = get_double(j, "prototype", "gamma", p.gamma);
  p.max_outer_iters = get_size(j, "prototype", "max_outer_iters", p.max_outer_iters);
  p.tol = get_double(j, "prototype", "tol", p.tol);
  p.reg_step = get_double(j, "prototype", "reg_step", p.reg_step);
  cfg.prototype_tau = get_double(j, "prototype", "tau", cfg.prototype_tau);
  require_range(p.k >= 1, "prototype.k", "must be >= 1");
  require_range(p.lambda_c >= 0.0, "prototype.lambda_c", "must be >= 0");
  require_range(p.gamma >= 0.0, "prototype.gamma", "must be >= 0");
  require_range(p.max_outer_iters >= 1, "prototype.max_outer_iters", "must be >= 1");
  require_range(p.tol > 0.0, "prototype.tol", "must be > 0");
  require_range(p.reg_step > 0.0, "prototype.reg_step", "must be > 0");
  require_range(cfg.prototype_tau >= 0.0, "prototype.tau", "must be >= 0");
}

void parse_cf(const ordered_json& j, CfConfig& c) {
  if (j.is_null()) return;
  if (!j.is_object()) throw ConfigError("config key \"cf\": expected an object");
  check_keys(j, "cf", {"target_margin", "lambda_init", "lambda_mult", "max_iters", "step_size",
                       "clip_unit_box"});
  c.target_margin = get_double(j, "cf", "target_margin", c.target_margin);
  c.lambda_init = get_double(j, "cf", "lambda_init", c.lambda_init);
  c.lambda_mult = get_double(j, "cf", "lambda_mult", c.lambda_mult);
  c.max_iters = get_size(j, "cf", "max_iters", c.max_iters);
  c.step_size = get_double(j, "cf", "step_size", c.step_size);
  c.clip_unit_box = get_bool(j, "cf", "clip_unit_box", c.clip_unit_box);
  require_range(c.target_margin > 0.0 && c.target_margin < 0.5, "cf.target_margin",
                "must be in (0, 0.5)");
  require_range(c.lambda_init > 0.0, "cf.lambda_init", "must be > 0");
  require_range(c.lambda_mult > 1.0, "cf.lambda_mult", "must be > 1");
  require_range(c.max_iters >= 1, "cf.max_iters", "must be >= 1");
  require_range(c.step_size > 0.0, "cf.step_size", "must be > 0");
}

void parse_target(const ordered_json& j, LogisticTrainConfig& t) {
  if (j.is_null()) return;
  if (!j.is_object()) throw ConfigError("config key \"target\": expected an object");
  check_keys(j, "target", {"l2", "max_iters", "tol"});
  t.l2 = get_double(j, "target", "l2", t.l2);
  t.max_iters = get_size(j, "target", "max_iters", t.max_iters);
  t.tol = get_double(j, "target", "tol", t.tol);
  require_range(t.l2 >= 0.0, "target.l2", "must be >= 0");
  require_range(t.max_iters >= 1, "target.max_iters", "must be >= 1");
  require_range(t.tol > 0.0, "target.tol", "must be > 0");
}

std::string dataset_label(const DatasetConfig& d) {
  if (!d.name.empty()) return d.name;
  if (d.synthetic) {
    return d.spec.kind == SyntheticKind::GaussianBlobs ? "gaussian_blobs" : "linear_margin";
  }
  // Path stem: strip directories and the extension.
  std::string stem = d.csv_path;
  const auto slash = stem.find_last_of("/\\");
  if (slash != std::string::npos) stem = stem.substr(slash + 1);
  const auto dot = stem.find_last_of('.');
  if (dot != std::string::npos && dot > 0) stem = stem.substr(0, dot);
  return stem.empty() ? "csv" : stem;
}

double sample_mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

std::string format_fixed(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

}  // namespace

std::string method_name(Method m) {
  return m == Method::Prototype ? "prototype" : "baseline1";
}

Method method_from_name(const std::string& name) {
  if (name == "prototype") return Method::Prototype;
  if (name == "baseline1") return Method::Baseline1;
  throw ConfigError("unknown method \"" + name + "\" (expected \"prototype\" or \"baseline1\")");
}

std::string cf_method_name(CfMethod m) {
  switch (m) {
    case CfMethod::MccfL2: return "mccf_l2";
    case CfMethod::MccfL1: return "mccf_l1";
    case CfMethod::NearestNeighbor: return "nearest_neighbor";
  }
  return "mccf_l2";
}

CfMethod cf_method_from_name(const std::string& name) {
  if (name == "mccf_l2") return CfMethod::MccfL2;
  if (name == "mccf_l1") return CfMethod::MccfL1;
  if (name == "nearest_neighbor") return CfMethod::NearestNeighbor;
  throw ConfigError("unknown cf_method \"" + name +
                    "\" (expected \"mccf_l2\", \"mccf_l1\" or \"nearest_neighbor\")");
}

ExperimentConfig config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // nlohmann reports a byte offset; translate it to a line for diagnostics.
    const std::size_t upto = std::min(text.size(), e.byte);
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError("config parse error at line " + std::to_string(line) + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root: expected an object");
  check_keys(j, "", {"dataset", "split", "query_budgets", "n_trials", "methods", "cf_method",
                     "prototype", "cf", "target", "master_seed"});

  ExperimentConfig cfg;
  cfg.dataset = parse_dataset(j.contains("dataset") ? j.at("dataset") : ordered_json());
  cfg.split = parse_split(j.contains("split") ? j.at("split") : ordered_json());

  if (j.contains("query_budgets")) {
    const auto& b = j.at("query_budgets");
    if (!b.is_array() || b.empty()) {
      throw ConfigError("config key \"query_budgets\": expected a non-empty array");
    }
    cfg.query_budgets.clear();
    for (const auto& v : b) {
      if (!v.is_number_unsigned() || v.get<std::uint64_t>() < 1) {
        throw ConfigError("config key \"query_budgets\": entries must be positive integers");
      }
      cfg.query_budgets.push_back(v.get<std::size_t>());
    }
    for (std::size_t i = 0; i < cfg.query_budgets.size(); ++i) {
      for (std::size_t k = i + 1; k < cfg.query_budgets.size(); ++k) {
        if (cfg.query_budgets[i] == cfg.query_budgets[k]) {
          throw ConfigError("config key \"query_budgets\": duplicate budget " +
                            std::to_string(cfg.query_budgets[i]));
        }
      }
    }
  }

  cfg.n_trials = get_size(j, "", "n_trials", cfg.n_trials);
  require_range(cfg.n_trials >= 1, "n_trials", "must be >= 1");

  if (j.contains("methods")) {
    const auto& m = j.at("methods");
    if (!m.is_array() || m.empty()) {
      throw ConfigError("config key \"methods\": expected a non-empty array");
    }
    cfg.methods.clear();
    for (const auto& v : m) {
      if (!v.is_string()) throw ConfigError("config key \"methods\": entries must be strings");
      const Method parsed = method_from_name(v.get<std::string>());
      if (std::find(cfg.methods.begin(), cfg.methods.end(), parsed) != cfg.methods.end()) {
        throw ConfigError("config key \"methods\": duplicate method \"" + v.get<std::string>() +
                          "\"");
      }
      cfg.methods.push_back(parsed);
    }
  }

  cfg.cf_method = cf_method_from_name(get_string(j, "", "cf_method", cf_method_name(cfg.cf_method)));
  parse_prototype(j.contains("prototype") ? j.at("prototype") : ordered_json(), cfg);
  parse_cf(j.contains("cf") ? j.at("cf") : ordered_json(), cfg.cf);
  parse_target(j.contains("target") ? j.at("target") : ordered_json(), cfg.target);
  cfg.master_seed = get_seed(j, "", "master_seed", cfg.master_seed);
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  ordered_json ds;
  ds["source"] = cfg.dataset.synthetic ? "synthetic" : "csv";
  ds["name"] = dataset_label(cfg.dataset);
  if (cfg.dataset.synthetic) {
    ordered_json s;
    s["kind"] = cfg.dataset.spec.kind == SyntheticKind::GaussianBlobs ? "gaussian_blobs"
                                                                      : "linear_margin";
    s["n"] = cfg.dataset.spec.n;
    s["d"] = cfg.dataset.spec.d;
    s["separation"] = cfg.dataset.spec.separation;
    s["seed"] = cfg.dataset.spec.seed;
    ds["synthetic"] = s;
  } else {
    ds["csv_path"] = cfg.dataset.csv_path;
    ds["schema_path"] = cfg.dataset.schema_path;
    ds["balance"] = cfg.dataset.balance;
  }
  j["dataset"] = ds;

  ordered_json sp;
  sp["train_frac"] = cfg.split.train_frac;
  sp["query_frac"] = cfg.split.query_frac;
  sp["ref_frac"] = cfg.split.ref_frac;
  sp["seed"] = cfg.split.seed;
  j["split"] = sp;

  j["query_budgets"] = cfg.query_budgets;
  j["n_trials"] = cfg.n_trials;
  ordered_json methods = ordered_json::array();
  for (Method m : cfg.methods) methods.push_back(method_name(m));
  j["methods"] = methods;
  j["cf_method"] = cf_method_name(cfg.cf_method);

  ordered_json p;
  p["k"] = cfg.prototype.k;
  p["lambda_c"] = cfg.prototype.lambda_c;
  p["lambda_c0"] = cfg.prototype.lambda_c0 ? ordered_json(*cfg.prototype.lambda_c0)
                                           : ordered_json(nullptr);
  p["lambda_c1"] = cfg.prototype.lambda_c1 ? ordered_json(*cfg.prototype.lambda_c1)
                                           : ordered_json(nullptr);
  p["gamma"] = cfg.prototype.gamma;
  p["max_outer_iters"] = cfg.prototype.max_outer_iters;
  p["tol"] = cfg.prototype.tol;
  p["reg_step"] = cfg.prototype.reg_step;
  p["tau"] = cfg.prototype_tau;
  j["prototype"] = p;

  ordered_json c;
  c["target_margin"] = cfg.cf.target_margin;
  c["lambda_init"] = cfg.cf.lambda_init;
  c["lambda_mult"] = cfg.cf.lambda_mult;
  c["max_iters"] = cfg.cf.max_iters;
  c["step_size"] = cfg.cf.step_size;
  c["clip_unit_box"] = cfg.cf.clip_unit_box;
  j["cf"] = c;

  ordered_json t;
  t["l2"] = cfg.target.l2;
  t["max_iters"] = cfg.target.max_iters;
  t["tol"] = cfg.target.tol;
  j["target"] = t;

  j["master_seed"] = cfg.master_seed;
  return j.dump(2);
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

Dataset load_experiment_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset.synthetic) return make_synthetic(cfg.dataset.spec);
  const CsvSchema schema = load_schema(cfg.dataset.schema_path);
  LoadReport rep;
  Dataset ds = load_csv(cfg.dataset.csv_path, schema, &rep);
  if (rep.rows_dropped_missing + rep.rows_unparseable > 0) {
    std::cerr << "load " << cfg.dataset.csv_path << ": kept " << rep.rows_kept << " of "
              << rep.rows_read << " rows (" << rep.rows_dropped_missing << " missing, "
              << rep.rows_unparseable << " unparseable)\n";
  }
  if (cfg.dataset.balance) ds = balance_classes(ds, mix_seed(cfg.master_seed, kBalanceStream));
  return ds;
}

std::uint64_t experiment_trial_seed(std::uint64_t master_seed, std::size_t t) {
  return mix_seed(master_seed, t + 1);
}

SplitSpec trial_split_spec(const ExperimentConfig& cfg, std::uint64_t trial_seed) {
  SplitSpec sp = cfg.split;
  sp.seed = mix_seed(mix_seed(trial_seed, kSplitStream), cfg.split.seed);
  return sp;
}

std::vector<std::size_t> trial_query_order(std::size_t pool_size, std::uint64_t trial_seed) {
  std::vector<std::size_t> order(pool_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(trial_seed, kQueryOrderStream));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::uint64_t trial_prototype_seed(std::uint64_t trial_seed) {
  return mix_seed(trial_seed, kPrototypeStream);
}

CfGenerator make_cf_generator(const ExperimentConfig& cfg, const Dataset& pool_source,
                              const LinearModel& target) {
  CfConfig cc = cfg.cf;
  switch (cfg.cf_method) {
    case CfMethod::MccfL2:
      cc.cost = CfCost::L2;
      return [cc](const LinearModel& m, const Point& x) { return mccf_l2(m, x, cc); };
    case CfMethod::MccfL1:
      cc.cost = CfCost::L1;
      return [cc](const LinearModel& m, const Point& x) { return mccf_iterative(m, x, cc); };
    case CfMethod::NearestNeighbor: {
      std::vector<Point> pool;
      for (const Point& x : pool_source.features) {
        if (predict_label(target, x) == 1) pool.push_back(x);
      }
      return [pool = std::move(pool)](const LinearModel&, const Point& x) {
        return nearest_neighbor_cf(x, pool);
      };
    }
  }
  throw InvalidArgument("unhandled counterfactual method");
}

TrialResult run_trial(const Dataset& ds, const ExperimentConfig& cfg, std::uint64_t trial_seed) {
  const std::size_t n_methods = cfg.methods.size();
  const std::size_t n_budgets = cfg.query_budgets.size();
  TrialResult out;
  out.cells.resize(n_methods * n_budgets);
  for (std::size_t mi = 0; mi < n_methods; ++mi) {
    for (std::size_t bi = 0; bi < n_budgets; ++bi) {
      out.cells[mi * n_budgets + bi].method = cfg.methods[mi];
      out.cells[mi * n_budgets + bi].budget = cfg.query_budgets[bi];
    }
  }

  const SplitResult parts = split(ds, trial_split_spec(cfg, trial_seed));

  const std::size_t max_budget =
      *std::max_element(cfg.query_budgets.begin(), cfg.query_budgets.end());
  if (max_budget > parts.query_pool.size()) {
    throw InvalidArgument("query budget " + std::to_string(max_budget) +
                          " exceeds query pool size " + std::to_string(parts.query_pool.size()));
  }

  const LinearModel target =
      train_logistic(parts.train.features, parts.train.labels, cfg.target);
  const CfGenerator gen = make_cf_generator(cfg, parts.train, target);

  // One shuffled order per trial; every budget queries its prefix, so the
  // budget-300 set is contained in the budget-400 set and so on.
  const std::vector<std::size_t> order = trial_query_order(parts.query_pool.size(), trial_seed);

  PrototypeFitConfig proto_cfg = cfg.prototype;
  proto_cfg.seed = trial_prototype_seed(trial_seed);

  for (std::size_t bi = 0; bi < n_budgets; ++bi) {
    const std::size_t budget = cfg.query_budgets[bi];
    try {
      // A fresh oracle per budget keeps the audit exact: its counter must
      // equal the budget when the cell is done.
      Oracle oracle(target, gen);
      std::vector<std::pair<Point, QueryResponse>> responses;
      responses.reserve(budget);
      for (std::size_t i = 0; i < budget; ++i) {
        const Point& x = parts.query_pool.features[order[i]];
        responses.emplace_back(x, oracle.query(x));
      }
      const std::uint64_t issued = oracle.query_count();
      const QueryDataset qd = build_query_dataset(responses);

      for (std::size_t mi = 0; mi < n_methods; ++mi) {
        TrialCell& cell = out.cells[mi * n_budgets + bi];
        cell.queries = issued;
        const auto t0 = std::chrono::steady_clock::now();
        try {
          double fid_value = 0.0;
          if (cfg.methods[mi] == Method::Prototype) {
            PrototypePair pair = fit_prototypes(qd.d0, qd.d1, qd.d_cf, proto_cfg);
            const PrototypeSurrogate s{std::move(pair), cfg.prototype_tau};
            fid_value = fidelity(
                target, [&s](const Point& x) { return predict_prototype(s, x); },
                parts.ref.features);
          } else {
            const LinearModel b1 = fit_baseline1(qd, cfg.target);
            fid_value = fidelity(
                target, [&b1](const Point& x) { return predict_label(b1, x); },
                parts.ref.features);
          }
          cell.ok = true;
          cell.fid = fid_value;
        } catch (const std::exception& e) {
          cell.ok = false;
          cell.error = e.what();
        }
        cell.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
    } catch (const std::exception& e) {
      for (std::size_t mi = 0; mi < n_methods; ++mi) {
        TrialCell& cell = out.cells[mi * n_budgets + bi];
        cell.ok = false;
        cell.error = e.what();
      }
    }
  }
  return out;
}

TrialResult run_trial(const ExperimentConfig& cfg, std::uint64_t trial_seed) {
  const Dataset ds = load_experiment_dataset(cfg);
  return run_trial(ds, cfg, trial_seed);
}

FidelityReport run_experiment(const ExperimentConfig& cfg, std::size_t jobs) {
  const auto t_start = std::chrono::steady_clock::now();
  const Dataset ds = load_experiment_dataset(cfg);

  // Budget feasibility is a config problem, not a trial failure; the pool
  // size is fraction arithmetic, identical for every trial seed.
  {
    SplitSpec probe = cfg.split;
    probe.seed = 0;
    const SplitResult parts = split(ds, probe);
    const std::size_t max_budget =
        *std::max_element(cfg.query_budgets.begin(), cfg.query_budgets.end());
    if (max_budget > parts.query_pool.size()) {
      throw InvalidArgument("query budget " + std::to_string(max_budget) +
                            " exceeds query pool size " +
                            std::to_string(parts.query_pool.size()));
    }
  }

  FidelityReport rep;
  rep.dataset = dataset_label(cfg.dataset);
  rep.master_seed = cfg.master_seed;
  rep.resolved_config = config_to_json(cfg);
  rep.trial_seeds.resize(cfg.n_trials);
  for (std::size_t t = 0; t < cfg.n_trials; ++t) {
    rep.trial_seeds[t] = experiment_trial_seed(cfg.master_seed, t);
  }

  std::vector<TrialResult> results(cfg.n_trials);
  std::vector<std::string> trial_errors(cfg.n_trials);
  const auto run_one = [&](std::size_t t) {
    try {
      results[t] = run_trial(ds, cfg, rep.trial_seeds[t]);
    } catch (const std::exception& e) {
      trial_errors[t] = e.what();
    }
  };

  const std::size_t n_jobs = std::min(std::max<std::size_t>(jobs, 1), cfg.n_trials);
  if (n_jobs == 1) {
    for (std::size_t t = 0; t < cfg.n_trials; ++t) run_one(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(n_jobs);
    for (std::size_t w = 0; w < n_jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t t = next.fetch_add(1); t < cfg.n_trials; t = next.fetch_add(1)) {
          run_one(t);
        }
      });
    }
    for (auto& th : workers) th.join();
  }

  const std::size_t n_budgets = cfg.query_budgets.size();
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    for (std::size_t bi = 0; bi < n_budgets; ++bi) {
      ReportCell cell;
      cell.method = method_name(cfg.methods[mi]);
      cell.cf_method = cf_method_name(cfg.cf_method);
      cell.budget = cfg.query_budgets[bi];
      for (std::size_t t = 0; t < cfg.n_trials; ++t) {
        const std::string tag = "trial " + std::to_string(t) + ": ";
        if (!trial_errors[t].empty()) {
          cell.failures.push_back(tag + trial_errors[t]);
          continue;
        }
        const TrialCell& tc = results[t].cells[mi * n_budgets + bi];
        cell.seconds += tc.seconds;
        if (tc.ok) {
          cell.values.push_back(tc.fid);
          cell.query_counts.push_back(tc.queries);
        } else {
          cell.failures.push_back(tag + tc.error);
        }
      }
      cell.present = !cell.values.empty();
      if (cell.present) {
        cell.mean = sample_mean(cell.values);
        cell.stddev = sample_std(cell.values, cell.mean);
      } else {
        cell.absent_reason = cell.failures.empty() ? "no trials ran" : cell.failures.front();
      }
      rep.cells.push_back(std::move(cell));
    }
  }

  rep.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return rep;
}

std::string report_to_json(const FidelityReport& rep) {
  ordered_json j;
  j["dataset"] = rep.dataset;
  j["master_seed"] = rep.master_seed;
  j["trial_seeds"] = rep.trial_seeds;
  ordered_json cells = ordered_json::array();
  for (const ReportCell& c : rep.cells) {
    ordered_json jc;
    jc["method"] = c.method;
    jc["cf_method"] = c.cf_method;
    jc["budget"] = c.budget;
    jc["present"] = c.present;
    jc["n_trials"] = c.values.size();
    if (c.present) {
      jc["mean"] = c.mean;
      jc["std"] = c.stddev;
      jc["values"] = c.values;
      jc["query_counts"] = c.query_counts;
    } else {
      jc["absent_reason"] = c.absent_reason;
    }
    jc["failures"] = c.failures;
    jc["wall_time_s"] = c.seconds;
    cells.push_back(std::move(jc));
  }
  j["cells"] = cells;
  j["total_wall_time_s"] = rep.total_seconds;
  j["config"] = ordered_json::parse(rep.resolved_config);
  return j.dump(2);
}

std::string report_to_csv(const FidelityReport& rep) {
  std::string out = "dataset,method,cf_method,budget,mean,std,n_trials\n";
  for (const ReportCell& c : rep.cells) {
    if (!c.present) continue;
    out += rep.dataset + "," + c.method + "," + c.cf_method + "," + std::to_string(c.budget) +
           "," + format_fixed(c.mean) + "," + format_fixed(c.stddev) + "," +
           std::to_string(c.values.size()) + "\n";
  }
  return out;
}

std::string report_to_table(const FidelityReport& rep) {
  // Percent view, one row per method, one column per budget (config order).
  std::vector<std::string> methods;
  std::vector<std::size_t> budgets;
  for (const ReportCell& c : rep.cells) {
    if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) {
      methods.push_back(c.method);
    }
    if (std::find(budgets.begin(), budgets.end(), c.budget) == budgets.end()) {
      budgets.push_back(c.budget);
    }
  }
  const auto find_cell = [&](const std::string& m, std::size_t b) -> const ReportCell* {
    for (const ReportCell& c : rep.cells) {
      if (c.method == m && c.budget == b) return &c;
    }
    return nullptr;
  };

  std::size_t name_width = 6;  // "method"
  for (const auto& m : methods) name_width = std::max(name_width, m.size());
  constexpr int kColWidth = 14;

  std::string out = "fidelity (percent, mean +- sample std over trials)\n";
  {
    std::size_t max_trials = 0;
    for (const ReportCell& c : rep.cells) max_trials = std::max(max_trials, c.values.size());
    out += "dataset: " + rep.dataset + "   cf_method: " +
           (rep.cells.empty() ? "-" : rep.cells.front().cf_method) +
           "   trials: " + std::to_string(max_trials) + "\n\n";
  }

  char buf[96];
  std::snprintf(buf, sizeof(buf), "%-*s", static_cast<int>(name_width), "method");
  out += buf;
  for (std::size_t b : budgets) {
    const std::string header = "budget " + std::to_string(b);
    std::snprintf(buf, sizeof(buf), " | %*s", kColWidth, header.c_str());
    out += buf;
  }
  out += "\n";
  out += std::string(name_width, '-');
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    out += "-+-" + std::string(kColWidth, '-');
  }
  out += "\n";
  for (const auto& m : methods) {
    std::snprintf(buf, sizeof(buf), "%-*s", static_cast<int>(name_width), m.c_str());
    out += buf;
    for (std::size_t b : budgets) {
      const ReportCell* c = find_cell(m, b);
      if (c != nullptr && c->present) {
        std::snprintf(buf, sizeof(buf), " | %6.1f +- %4.1f", 100.0 * c->mean,
                      100.0 * c->stddev);
      } else {
        std::snprintf(buf, sizeof(buf), " | %*s", kColWidth, "absent");
      }
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace protoextract
