#pragma once

#include "clusterpost/core.hpp"
#include "clusterpost/dataset.hpp"
#include "clusterpost/hmc.hpp"
#include "clusterpost/lsh.hpp"
#include "clusterpost/model.hpp"
#include "clusterpost/vb.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace clusterpost {

struct ExperimentConfig {
  std::string name = "dataset";
  std::filesystem::path train_path;
  /// Held-out file; when empty the training file is split with test_fraction.
  std::filesystem::path test_path;
  real test_fraction = 0.2;
  TaskMode mode = TaskMode::classification;
  /// Divide features by the training set's max norm (the test set reuses it).
  bool normalize = true;
  std::vector<real> deltas{0.1};
  NeighborMode nn = NeighborMode::lsh;
  LshParams lsh{0.0, 4, 8, 1};
  real prior_variance = 1.0;
  real noise_variance = 1.0;
  HmcConfig hmc;
  VbConfig vb;
  bool run_vb = true;
  int trials = 1;
  /// Shuffle the clustering stream with seed + trial.
  bool shuffle = false;
  /// Moment matching is skipped (approx_kl = n/a) above this many parameters.
  Index kl_dim_cap = 5000;
  PredictionRule prediction = PredictionRule::posterior_mean;
  std::filesystem::path output_dir;
  std::uint64_t seed = 1;
};

/// Flat "key = value" file; '#' starts a comment. Unknown keys are errors.
ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {});
ExperimentConfig read_config(const std::filesystem::path& path, ExperimentConfig base = {});
/// Applies one key/value pair, as used by both the file and flag overrides.
void apply_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

struct ResultRow {
  std::string method;  // exact, compressed or vb
  int trial = 0;       // -1 marks the mean over trials
  std::string dataset;
  std::size_t N = 0;
  std::size_t c = 0;
  real delta = 0;
  real rho = 1;
  std::optional<real> approx_kl;
  real test_error_or_mse = 0;
  real t1 = 0;  // seconds, parse to clustering result
  real t2 = 0;  // seconds, sampling (or VB fitting) only
  std::uint64_t grad_evals = 0;  // per-pseudo-point likelihood-gradient terms

  bool operator==(const ResultRow&) const = default;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<std::string> failures;  // rows that were aborted, with the reason
};

/// Exact baseline, one compressed row per delta and one VB row, per trial.
/// Clusterings are computed once per (delta, trial) and reused.
ExperimentResult run_experiment(const ExperimentConfig& config, const Dataset& train, const Dataset& test);
/// Loads (and normalizes) the configured files first; t1 includes parsing.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Per (method, delta) averages of the per-trial rows, marked trial = -1.
std::vector<ResultRow> mean_rows(const std::vector<ResultRow>& rows);

enum class ReportFormat { csv, json, table };

ReportFormat parse_report_format(const std::string& name);
std::string report(const std::vector<ResultRow>& rows, ReportFormat format);
std::vector<ResultRow> parse_csv_report(std::istream& in);
std::vector<ResultRow> parse_json_report(const std::string& text);

}  // namespace clusterpost
