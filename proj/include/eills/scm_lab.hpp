#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "eills/env_data.hpp"

namespace eills {

/// A linear structural causal model x = B x + alpha y + eps_x,
/// y = beta_star' x + eps0, with eps_x ~ N(0, D) shared across environments
/// and per-environment noise variance v0[e] = Var(eps0^(e)).
struct LinearScmSpec {
  Eigen::MatrixXd B;          // p x p covariate-to-covariate effects
  Eigen::VectorXd alpha;      // y-to-covariate effects
  Eigen::VectorXd beta_star;  // true coefficients
  Eigen::VectorXd D_diag;     // diagonal of the exogenous-noise covariance
  std::vector<double> v0;     // one entry per environment

  Eigen::Index p() const { return beta_star.size(); }
  int n_envs() const { return static_cast<int>(v0.size()); }

  /// Checks shapes, positivity, and acyclicity of the graph induced by
  /// B + alpha beta_star'; throws DataError naming offending nodes otherwise.
  void validate() const;

  /// Total effect matrix W = (I - B - alpha beta_star')^-1.
  Eigen::MatrixXd total_effect() const;
};

/// One environment of a built-in benchmark generator.
struct BenchmarkTag {
  enum class Kind { kFig2Env1, kFig2Env2, kExample1, kExampleA1, kOracleGaussian };
  Kind kind = Kind::kFig2Env1;
  double s = 0.0;                // example1 / example_a1
  double h = 0.0, v1 = 0.0, v2 = 0.0, v0 = 0.0;  // example_a1
  double sigma = 1.0;            // oracle_gaussian
  Eigen::VectorXd beta_star;     // oracle_gaussian
  std::string env_id = "1";
};

BenchmarkTag fig2_env1();
BenchmarkTag fig2_env2();
BenchmarkTag example1_env(double s, const std::string& env_id = "1");
BenchmarkTag example_a1_env(double s, double h, double v1, double v2, double v0,
                            const std::string& env_id = "1");
BenchmarkTag oracle_gaussian(const Eigen::VectorXd& beta_star, double sigma);

/// Draws n rows of environment `env`: x = W (eps_x + alpha eps0),
/// y = beta_star' x + eps0. Deterministic in (spec, env, n, seed).
EnvironmentSample sample_linear_scm(const LinearScmSpec& spec, int env, Eigen::Index n,
                                    std::uint64_t seed);

EnvironmentSample sample_benchmark(const BenchmarkTag& tag, Eigen::Index n, std::uint64_t seed);

/// A named multi-environment benchmark with its ground truth.
struct BenchmarkSuite {
  std::string name;
  std::vector<BenchmarkTag> envs;
  Eigen::VectorXd beta_star;
  std::vector<int> s_star;  // 0-based support of beta_star
  std::vector<int> g_set;   // 0-based linear spurious variables
};

/// Parses the CLI benchmark syntax:
///   fig2
///   example1:s1,s2
///   example_a1:s,h,v1,v2,v0_1,v0_2
///   oracle_gaussian:sigma,b1,...,bp
BenchmarkSuite parse_benchmark(const std::string& text);

/// Samples every environment of a suite (n rows each) into a dataset.
/// Per-environment streams are derived deterministically from `seed`.
MultiEnvDataset sample_suite(const BenchmarkSuite& suite, Eigen::Index n, std::uint64_t seed,
                             WeightScheme scheme = WeightScheme::kEqual);

/// Deterministic per-replication stream splitter (splitmix64 step).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace eills
