#include "protoextract/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "protoextract/errors.hpp"
#include "protoextract/harness.hpp"
#include "protoextract/ot.hpp"

namespace protoextract {

namespace {

using nlohmann::ordered_json;

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  std::size_t jobs = 1;
  bool verbose = false;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

std::vector<std::string> split_dotted(const std::string& key) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part =
        dot == std::string::npos ? key.substr(start) : key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("override path \"" + key + "\" has an empty segment");
    parts.push_back(part);
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return parts;
}

void apply_override(ordered_json& doc, const std::string& kv) {
  const std::size_t eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key=value, got \"" + kv + "\"");
  }
  const std::string key = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  ordered_json value;
  try {
    value = ordered_json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;  // bare words are strings
  }
  const std::vector<std::string> parts = split_dotted(key);
  ordered_json* node = &doc;
  try {
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
    if (!node->is_object() && !node->is_null()) {
      throw ConfigError("override path \"" + key + "\" does not address an object");
    }
    (*node)[parts.back()] = value;
  } catch (const nlohmann::json::type_error&) {
    throw ConfigError("override path \"" + key + "\" does not address an object");
  }
}

std::uint64_t parse_seed_env(const std::string& text) {
  if (text.empty() || text[0] == '-') {
    throw ConfigError("PROTO_EXTRACT_SEED must be a non-negative integer, got \"" + text + "\"");
  }
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
  if (errno == ERANGE || end != text.c_str() + text.size()) {
    throw ConfigError("PROTO_EXTRACT_SEED must be a non-negative integer, got \"" + text + "\"");
  }
  return v;
}

ExperimentConfig load_config(const CommonOpts& opts) {
  const std::string text = read_file(opts.config_path);
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min(text.size(), e.byte);
    const auto line =
        1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError("config parse error at line " + std::to_string(line) + ": " + e.what());
  }
  for (const std::string& kv : opts.overrides) apply_override(doc, kv);
  ExperimentConfig cfg = config_from_json(doc.dump());
  if (const char* env = std::getenv("PROTO_EXTRACT_SEED")) {
    if (env[0] != '\0') cfg.master_seed = parse_seed_env(env);
  }
  return cfg;
}

void write_resolved_config(const ExperimentConfig& cfg, const CommonOpts& opts) {
  ensure_out_dir(opts.out_dir);
  write_file(opts.out_dir + "/resolved_config.json", config_to_json(cfg) + "\n");
  if (opts.verbose) std::cerr << "resolved config:\n" << config_to_json(cfg) << "\n";
}

std::string format_g(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

/// Plain numeric CSV: one point per line. A first line that fails to parse
/// as numbers is treated as a header and skipped.
std::vector<Point> read_points_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open inputs file: " + path);
  std::vector<Point> points;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Point p;
    bool ok = true;
    std::size_t start = 0;
    while (start <= line.size()) {
      const std::size_t comma = line.find(',', start);
      const std::string field =
          comma == std::string::npos ? line.substr(start) : line.substr(start, comma - start);
      try {
        std::size_t used = 0;
        const double v = std::stod(field, &used);
        if (used != field.size() || !std::isfinite(v)) throw std::invalid_argument(field);
        p.push_back(v);
      } catch (const std::exception&) {
        ok = false;
        break;
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!ok) {
      if (line_no == 1) continue;  // header row
      throw IoError(path + " line " + std::to_string(line_no) + ": cannot parse point");
    }
    points.push_back(std::move(p));
  }
  if (points.empty()) throw IoError(path + ": no data rows");
  return points;
}

int cmd_train_target(const CommonOpts& opts) {
  const ExperimentConfig cfg = load_config(opts);
  write_resolved_config(cfg, opts);
  const Dataset ds = load_experiment_dataset(cfg);
  const std::uint64_t tseed = experiment_trial_seed(cfg.master_seed, 0);
  const SplitResult parts = split(ds, trial_split_spec(cfg, tseed));
  const LinearModel target = train_logistic(parts.train.features, parts.train.labels, cfg.target);
  save_model(target, opts.out_dir + "/target.json");

  std::size_t correct = 0;
  for (std::size_t i = 0; i < parts.train.size(); ++i) {
    correct += predict_label(target, parts.train.features[i]) == parts.train.labels[i];
  }
  std::cout << "trained target on " << parts.train.size() << " rows (dim " << parts.train.dim()
            << "), train accuracy "
            << static_cast<double>(correct) / static_cast<double>(parts.train.size()) << "\n"
            << "wrote " << opts.out_dir << "/target.json\n";
  return 0;
}

int cmd_gen_cf(const CommonOpts& opts, const std::string& model_path,
               const std::string& inputs_path) {
  const ExperimentConfig cfg = load_config(opts);
  write_resolved_config(cfg, opts);
  const LinearModel model = load_model(model_path);
  const std::vector<Point> points = read_points_csv(inputs_path);

  // nearest_neighbor draws its pool from the inputs the model labels 1.
  Dataset pool_source;
  pool_source.features = points;
  pool_source.labels.assign(points.size(), 0);
  const CfGenerator gen = make_cf_generator(cfg, pool_source, model);

  const std::size_t d = model.weights.size();
  std::string csv = "label";
  for (std::size_t j = 0; j < d; ++j) csv += ",cf_" + std::to_string(j);
  csv += "\n";
  std::atomic<std::uint64_t> counter{0};
  std::size_t generated = 0;
  for (const Point& x : points) {
    const QueryResponse resp = query(model, gen, x, counter);
    csv += std::to_string(resp.label);
    if (resp.counterfactual) {
      ++generated;
      for (double v : *resp.counterfactual) csv += "," + format_g(v);
    } else {
      csv += std::string(d, ',');
    }
    csv += "\n";
  }
  write_file(opts.out_dir + "/counterfactuals.csv", csv);
  std::cout << "generated " << generated << " counterfactuals for " << points.size()
            << " inputs (" << cf_method_name(cfg.cf_method) << ")\n"
            << "wrote " << opts.out_dir << "/counterfactuals.csv\n";
  return 0;
}

int cmd_extract(const CommonOpts& opts) {
  const ExperimentConfig cfg = load_config(opts);
  write_resolved_config(cfg, opts);
  const Dataset ds = load_experiment_dataset(cfg);
  const std::uint64_t tseed = experiment_trial_seed(cfg.master_seed, 0);
  const SplitResult parts = split(ds, trial_split_spec(cfg, tseed));
  const std::size_t budget = cfg.query_budgets.front();
  if (budget > parts.query_pool.size()) {
    throw InvalidArgument("query budget " + std::to_string(budget) +
                          " exceeds query pool size " + std::to_string(parts.query_pool.size()));
  }

  const LinearModel target = train_logistic(parts.train.features, parts.train.labels, cfg.target);
  const CfGenerator gen = make_cf_generator(cfg, parts.train, target);
  const std::vector<std::size_t> order = trial_query_order(parts.query_pool.size(), tseed);

  Oracle oracle(target, gen);
  std::vector<std::pair<Point, QueryResponse>> responses;
  responses.reserve(budget);
  for (std::size_t i = 0; i < budget; ++i) {
    const Point& x = parts.query_pool.features[order[i]];
    responses.emplace_back(x, oracle.query(x));
  }
  const QueryDataset qd = build_query_dataset(responses);

  PrototypeFitConfig proto_cfg = cfg.prototype;
  proto_cfg.seed = trial_prototype_seed(tseed);
  PrototypePair pair = fit_prototypes(qd.d0, qd.d1, qd.d_cf, proto_cfg);
  const PrototypeSurrogate surrogate{std::move(pair), cfg.prototype_tau};
  const double fid = fidelity(
      target, [&surrogate](const Point& x) { return predict_prototype(surrogate, x); },
      parts.ref.features);

  save_model(target, opts.out_dir + "/target.json");
  save_surrogate(surrogate, opts.out_dir + "/surrogate.json");
  ordered_json summary;
  summary["budget"] = budget;
  summary["queries"] = oracle.query_count();
  summary["fidelity"] = fid;
  summary["n_ref"] = parts.ref.size();
  write_file(opts.out_dir + "/extract.json", summary.dump(2) + "\n");
  std::cout << "extracted surrogate with " << oracle.query_count() << " queries, fidelity "
            << fid << " on " << parts.ref.size() << " reference rows\n"
            << "wrote " << opts.out_dir << "/surrogate.json\n";
  return 0;
}

int cmd_evaluate(const CommonOpts& opts, const std::string& surrogate_path,
                 const std::string& target_path, const std::string& inputs_path) {
  const ExperimentConfig cfg = load_config(opts);
  write_resolved_config(cfg, opts);
  const PrototypeSurrogate surrogate = load_surrogate(surrogate_path);
  const LinearModel target = load_model(target_path);
  std::vector<Point> ref;
  if (inputs_path.empty()) {
    const Dataset ds = load_experiment_dataset(cfg);
    const std::uint64_t tseed = experiment_trial_seed(cfg.master_seed, 0);
    ref = split(ds, trial_split_spec(cfg, tseed)).ref.features;
  } else {
    ref = read_points_csv(inputs_path);
  }
  const double fid = fidelity(
      target, [&surrogate](const Point& x) { return predict_prototype(surrogate, x); }, ref);
  ordered_json summary;
  summary["fidelity"] = fid;
  summary["n_points"] = ref.size();
  write_file(opts.out_dir + "/evaluate.json", summary.dump(2) + "\n");
  std::cout << "fidelity " << fid << " on " << ref.size() << " points\n";
  return 0;
}

int cmd_sweep(const CommonOpts& opts) {
  const ExperimentConfig cfg = load_config(opts);
  write_resolved_config(cfg, opts);
  const FidelityReport rep = run_experiment(cfg, opts.jobs);
  write_file(opts.out_dir + "/report.json", report_to_json(rep) + "\n");
  write_file(opts.out_dir + "/report.csv", report_to_csv(rep));
  const std::string table = report_to_table(rep);
  write_file(opts.out_dir + "/table.txt", table);
  std::cout << table << "wrote " << opts.out_dir << "/report.json, report.csv, table.txt\n";
  return 0;
}

struct SelfCheck {
  const char* name;
  bool ok;
  std::string detail;
};

int cmd_selftest() {
  // The perturbation hook simulates a miscompiled build so the failure path
  // of this command is itself testable.
  const bool perturb = std::getenv("PROTO_EXTRACT_SELFTEST_PERTURB") != nullptr;
  const double nudge = perturb ? 1e-3 : 0.0;
  std::vector<SelfCheck> checks;

  {
    const auto a = DiscreteDistribution::dirac({0.0, 0.0});
    const auto b = DiscreteDistribution::dirac({3.0, 4.0});
    const double cost = wasserstein2_sq(a, b) + nudge;
    checks.push_back({"dirac-transport", std::abs(cost - 25.0) < 1e-9,
                      "W2^2(delta_(0,0), delta_(3,4)) = " + format_g(cost) + ", want 25"});
  }
  {
    const auto a = DiscreteDistribution::uniform({{0.0}, {1.0}});
    const auto b = DiscreteDistribution::uniform({{0.5}, {1.5}});
    const double cost = wasserstein2_sq(a, b);
    checks.push_back({"sorted-matching-1d", std::abs(cost - 0.25) < 1e-9,
                      "W2^2 = " + format_g(cost) + ", want 0.25 (monotone matching)"});
  }
  {
    PrototypeFitConfig pc;
    pc.k = 1;
    pc.lambda_c = 0.5;
    pc.gamma = 0.0;
    const PrototypePair pair = fit_prototypes({{-1.0}}, {{1.0}}, {{0.0}}, pc);
    const double q0 = pair.q0.support[0][0];
    const double q1 = pair.q1.support[0][0];
    const bool ok = std::abs(q0 + 2.0 / 3.0) < 1e-4 && std::abs(q1 - 2.0 / 3.0) < 1e-4;
    checks.push_back({"symmetric-prototype-fixed-point", ok,
                      "prototypes (" + format_g(q0) + ", " + format_g(q1) + "), want -+2/3"});
  }
  {
    LinearModel m;
    m.weights = {1.0, 0.0};
    m.bias = 0.0;
    CfConfig cc;
    const Point cf = mccf_l2(m, {-2.0, 0.0}, cc);
    const double p = predict_proba(m, cf);
    const bool ok = std::abs(p - (0.5 + cc.target_margin)) < 1e-9 && std::abs(cf[1]) == 0.0;
    checks.push_back({"mccf-l2-projection", ok,
                      "proba at projection = " + format_g(p) + ", want 0.55 on the w-axis"});
  }
  {
    LinearModel m;
    m.weights = {2.0};
    m.bias = 0.0;
    std::atomic<std::uint64_t> counter{0};
    CfConfig cc;
    const auto gen = [&cc](const LinearModel& mm, const Point& xx) {
      return mccf_l2(mm, xx, cc);
    };
    const QueryResponse neg = query(m, gen, {-1.0}, counter);
    const QueryResponse pos = query(m, gen, {1.0}, counter);
    const bool ok = neg.label == 0 && neg.counterfactual.has_value() && pos.label == 1 &&
                    !pos.counterfactual.has_value() && counter.load() == 2;
    checks.push_back({"one-sided-query-protocol", ok,
                      "counterfactuals must accompany class-0 answers only"});
  }

  std::size_t passed = 0;
  for (const SelfCheck& c : checks) {
    if (c.ok) {
      ++passed;
      std::cout << "[ ok ] " << c.name << "\n";
    } else {
      std::cout << "[FAIL] " << c.name << " (" << c.detail << ")\n";
    }
  }
  std::cout << "selftest: " << passed << "/" << checks.size() << " checks passed\n";
  return passed == checks.size() ? 0 : 2;
}

void add_common(CLI::App* sub, CommonOpts& opts, bool with_jobs) {
  sub->add_option("--config", opts.config_path, "JSON experiment config")
      ->required();
  sub->add_option("--out", opts.out_dir, "output directory (default: out)");
  sub->add_option("--override", opts.overrides,
                  "dotted key=value applied to the config, repeatable");
  if (with_jobs) {
    sub->add_option("--jobs", opts.jobs, "trials to run concurrently (default: 1)")
        ->check(CLI::PositiveNumber);
  }
  sub->add_flag("-v,--verbose", opts.verbose, "chatty diagnostics on stderr");
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"model extraction via counterfactual-aware Wasserstein prototypes"};
  app.require_subcommand(1);

  CommonOpts train_opts, gencf_opts, extract_opts, eval_opts, sweep_opts;
  std::string gencf_model, gencf_inputs;
  std::string eval_surrogate, eval_target, eval_inputs;

  CLI::App* train = app.add_subcommand("train-target", "train and save the target model");
  add_common(train, train_opts, false);

  CLI::App* gencf =
      app.add_subcommand("gen-cf", "generate counterfactuals for a CSV of input points");
  add_common(gencf, gencf_opts, false);
  gencf->add_option("--model", gencf_model, "saved target model JSON")->required();
  gencf->add_option("--inputs", gencf_inputs, "CSV of input points, one per line")->required();

  CLI::App* extract =
      app.add_subcommand("extract", "one extraction run: query, fit, export the surrogate");
  add_common(extract, extract_opts, false);

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "fidelity of a saved surrogate against a saved target");
  add_common(evaluate, eval_opts, false);
  evaluate->add_option("--surrogate", eval_surrogate, "saved surrogate JSON")->required();
  evaluate->add_option("--target", eval_target, "saved target model JSON")->required();
  evaluate->add_option("--inputs", eval_inputs,
                       "CSV of reference points (default: the config's reference split)");

  CLI::App* sweep = app.add_subcommand("sweep", "full experiment grid with a fidelity report");
  add_common(sweep, sweep_opts, true);

  CLI::App* selftest =
      app.add_subcommand("selftest", "run the embedded closed-form checks and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) return cmd_train_target(train_opts);
    if (gencf->parsed()) return cmd_gen_cf(gencf_opts, gencf_model, gencf_inputs);
    if (extract->parsed()) return cmd_extract(extract_opts);
    if (evaluate->parsed()) return cmd_evaluate(eval_opts, eval_surrogate, eval_target, eval_inputs);
    if (sweep->parsed()) return cmd_sweep(sweep_opts);
    if (selftest->parsed()) return cmd_selftest();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 1;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return 1;
  } catch (const DimensionMismatch& e) {
    std::cerr << "dimension mismatch: " << e.what() << "\n";
    return 1;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace protoextract
