#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "protoextract/barycenter.hpp"
#include "protoextract/counterfactual.hpp"
#include "protoextract/data.hpp"
#include "protoextract/oracle.hpp"
#include "protoextract/surrogate.hpp"

namespace protoextract {

enum class Method { Prototype, Baseline1 };
enum class CfMethod { MccfL2, MccfL1, NearestNeighbor };

std::string method_name(Method m);
Method method_from_name(const std::string& name);
std::string cf_method_name(CfMethod m);
CfMethod cf_method_from_name(const std::string& name);

/// Where the experiment's rows come from. Exactly one source is active;
/// `name` labels the dataset in reports and defaults from the source.
struct DatasetConfig {
  bool synthetic = true;
  std::string name;
  std::string csv_path;
  std::string schema_path;
  bool balance = false;  // csv only: subsample the majority class once, pre-split
  SyntheticSpec spec;
};

/// Full experiment description. All per-trial randomness is derived from
/// master_seed; the seed fields inside `split` and `dataset.spec` select
/// streams rather than fixing the per-trial draws.
struct ExperimentConfig {
  DatasetConfig dataset;
  SplitSpec split;
  std::vector<std::size_t> query_budgets = {500, 400, 300};
  std::size_t n_trials = 10;
  std::vector<Method> methods = {Method::Prototype, Method::Baseline1};
  CfMethod cf_method = CfMethod::MccfL2;
  PrototypeFitConfig prototype;
  double prototype_tau = 0.0;
  CfConfig cf;
  LogisticTrainConfig target;
  std::uint64_t master_seed = 0;
};

/// Parses a JSON document into a config. Unknown keys are rejected with the
/// offending dotted path named; values are range-checked here so downstream
/// code never sees a malformed config.
ExperimentConfig config_from_json(const std::string& text);
/// Fully resolved config (defaults filled in), stable field order.
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::string& path);

/// Loads or generates the experiment's rows; shared across trials.
Dataset load_experiment_dataset(const ExperimentConfig& cfg);

/// Seed derivation. Trial t draws its seed from stream t+1 of the master
/// seed; within a trial the split, the query order, and the prototype init
/// use disjoint streams. Single-shot operations replay trial 0 through the
/// same helpers, so their artifacts match the sweep's first trial.
std::uint64_t experiment_trial_seed(std::uint64_t master_seed, std::size_t t);
SplitSpec trial_split_spec(const ExperimentConfig& cfg, std::uint64_t trial_seed);
std::vector<std::size_t> trial_query_order(std::size_t pool_size, std::uint64_t trial_seed);
std::uint64_t trial_prototype_seed(std::uint64_t trial_seed);

/// Oracle-side counterfactual generator for cfg.cf_method. For
/// nearest_neighbor the pool is the target-positive subset of pool_source's
/// rows; the mccf variants ignore pool_source.
CfGenerator make_cf_generator(const ExperimentConfig& cfg, const Dataset& pool_source,
                              const LinearModel& target);

/// One (method, budget) outcome within a trial.
struct TrialCell {
  Method method = Method::Prototype;
  std::size_t budget = 0;
  bool ok = false;
  double fid = 0.0;
  std::uint64_t queries = 0;
  double seconds = 0.0;  // surrogate fit + evaluation only
  std::string error;
};

/// Cells in method-major order: cells[mi * |budgets| + bi].
struct TrialResult {
  std::vector<TrialCell> cells;
};

/// One full trial: split (seeded from trial_seed), train the target, draw a
/// shuffled query order, then per budget issue that order's prefix through a
/// fresh oracle and fit every requested surrogate. Budgets are nested: a
/// smaller budget queries a prefix of a larger one's points, so budget
/// comparisons are paired. A surrogate failure marks its cell, not the trial.
TrialResult run_trial(const Dataset& ds, const ExperimentConfig& cfg, std::uint64_t trial_seed);
TrialResult run_trial(const ExperimentConfig& cfg, std::uint64_t trial_seed);

/// Aggregated (method, budget) cell. `values` holds per-trial fidelities of
/// the successful trials in trial order; mean/std are recomputable from it.
struct ReportCell {
  std::string method;
  std::string cf_method;
  std::size_t budget = 0;
  bool present = false;
  std::vector<double> values;
  std::vector<std::uint64_t> query_counts;
  std::vector<std::string> failures;
  double mean = 0.0;
  double stddev = 0.0;  // sample std (n-1); 0 when fewer than two values
  double seconds = 0.0;
  std::string absent_reason;
};

struct FidelityReport {
  std::string dataset;
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> trial_seeds;
  std::vector<ReportCell> cells;
  double total_seconds = 0.0;
  std::string resolved_config;  // JSON text of the config that ran
};

/// Runs n_trials trials (seeds derived from master_seed) and aggregates.
/// jobs > 1 distributes whole trials across threads; results are merged by
/// trial index, so the report is independent of scheduling.
FidelityReport run_experiment(const ExperimentConfig& cfg, std::size_t jobs = 1);

/// Serializations. JSON is byte-stable across reruns except the wall-time
/// fields (wall_time_s, total_wall_time_s); CSV has one row per present cell
/// (dataset,method,cf_method,budget,mean,std,n_trials); the table is an
/// aligned percent view, one row per method and one column per budget.
std::string report_to_json(const FidelityReport& rep);
std::string report_to_csv(const FidelityReport& rep);
std::string report_to_table(const FidelityReport& rep);

}  // namespace protoextract
