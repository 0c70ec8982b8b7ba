#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "eills/env_data.hpp"

namespace eills {

/// Resolved configuration for one CLI invocation.
struct ExperimentConfig {
  std::string input;         // CSV path (fit/path) or spec JSON path (popdiag)
  std::string benchmark;     // benchmark tag text, alternative to input
  double gamma = 0.0;
  std::vector<double> gamma_grid;
  double lambda = 0.0;
  WeightScheme weights = WeightScheme::kProportional;
  std::vector<Eigen::Index> n_grid;  // bench
  Eigen::Index n = 0;                // simulate / benchmark-backed fit and path
  int replications = 1;
  std::uint64_t base_seed = 0;
  std::filesystem::path out_dir;
  int max_support = -1;
  bool center = false;
  std::vector<std::string> estimators;  // bench; empty = all
  std::vector<double> omega;            // popdiag explicit weights
};

/// One aggregated row of a benchmark report.
struct BenchCell {
  std::string estimator;
  Eigen::Index n = 0;
  double mse_mean = 0, mse_se = 0;      // ||beta_hat - beta*||^2 over replications
  double sstar_mean = 0, sstar_se = 0;  // |S_hat intersect S*|
  double g_mean = 0, g_se = 0;          // |S_hat intersect G|
};

struct BenchReport {
  std::vector<BenchCell> cells;
};

/// Runs the replication benchmark and aggregates in replication order.
BenchReport run_bench(const ExperimentConfig& config);

int cmd_fit(const ExperimentConfig& config, std::ostream& out);
int cmd_path(const ExperimentConfig& config, std::ostream& out);
int cmd_bench(const ExperimentConfig& config, std::ostream& out);
int cmd_simulate(const ExperimentConfig& config, std::ostream& out);
int cmd_popdiag(const ExperimentConfig& config, std::ostream& out);

/// Full argv-level entry point: parses arguments, dispatches, maps errors to
/// exit codes (0 ok, 2 config, 3 data, 4 solver) with a JSON object on err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace eills
