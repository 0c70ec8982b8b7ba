#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace eills {

/// One environment's observations: an n x p design matrix and the response.
struct EnvironmentSample {
  Eigen::MatrixXd design;
  Eigen::VectorXd response;
  std::string env_id;

  Eigen::Index n() const { return design.rows(); }
  Eigen::Index p() const { return design.cols(); }
};

enum class WeightScheme { kEqual, kProportional };

/// An ordered collection of environments plus the weight vector omega.
/// Weights are positive and sum to one; every environment shares the same p.
struct MultiEnvDataset {
  std::vector<EnvironmentSample> environments;
  Eigen::VectorXd weights;

  Eigen::Index n_envs() const { return static_cast<Eigen::Index>(environments.size()); }
  Eigen::Index p() const { return environments.empty() ? 0 : environments.front().p(); }
  Eigen::Index total_n() const;

  /// Throws DataError if any invariant fails (empty environment, ragged p,
  /// non-finite entries, bad weights).
  void validate() const;
};

/// Marginal nonlinear features usable in the enhanced invariance regularizer.
enum class FeatureTag { kSquare, kCosine };

struct FeatureMoments {
  Eigen::VectorXd hxy;  // entry j: (1/n) sum_i h(x_ij) y_i
  Eigen::MatrixXd hxx;  // row j:   (1/n) sum_i h(x_ij) x_i^T
};

/// Per-environment second moments; everything the objectives consume.
struct EnvStats {
  Eigen::MatrixXd gram;  // (1/n) X^T X
  Eigen::VectorXd xty;   // (1/n) X^T y
  double yty = 0.0;      // (1/n) y^T y
  std::int64_t n = 0;
  std::map<FeatureTag, FeatureMoments> features;
};

struct SufficientStats {
  std::vector<EnvStats> envs;
  Eigen::Index p = 0;

  Eigen::Index n_envs() const { return static_cast<Eigen::Index>(envs.size()); }
  /// Checks symmetry (1e-12) and positive semidefiniteness of every Gram
  /// matrix; throws DataError on violation.
  void validate() const;
};

/// Effective sample-size functionals of (n^(e), omega^(e)).
struct SampleSizeDiagnostics {
  double n_star = 0;    // min_e n^(e) / omega^(e)
  double n_bar = 0;     // (sum_e omega^(e) / n^(e))^-1
  double n_min = 0;     // min_e n^(e)
  double n_dagger = 0;  // (sum_e omega^(e) / n^(e)^{3/2})^-1
  double n_omega = 0;   // (sum_e omega^(e)^2 / n^(e))^-1
};

struct LoadOptions {
  bool center = false;  // subtract per-environment column means of x
  WeightScheme weights = WeightScheme::kProportional;
};

/// Reads the `env,y,x1,...,xp` CSV format. One EnvironmentSample per distinct
/// env token, ordered by first appearance; rows keep file order.
MultiEnvDataset load_csv(const std::filesystem::path& path, const LoadOptions& options = {});
MultiEnvDataset load_csv(std::istream& in, const LoadOptions& options = {});

/// Writes the same format with 17 significant digits.
void write_csv(const MultiEnvDataset& dataset, const std::filesystem::path& path);
void write_csv(const MultiEnvDataset& dataset, std::ostream& out);

Eigen::VectorXd make_weights(const MultiEnvDataset& dataset, WeightScheme scheme);

SufficientStats compute_stats(const MultiEnvDataset& dataset,
                              const std::vector<FeatureTag>& features = {});

SampleSizeDiagnostics sample_size_diagnostics(const MultiEnvDataset& dataset);

/// JSON with fields `gram`, `xty`, `yty`, `n` per environment.
std::string stats_to_json(const SufficientStats& stats);

}  // namespace eills
