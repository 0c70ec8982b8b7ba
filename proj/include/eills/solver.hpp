#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "eills/env_data.hpp"
#include "eills/objective.hpp"

namespace eills {

enum class SingularPolicy { kReject, kMinNorm };

struct SearchConfig {
  double gamma = 0.0;
  double lambda = 0.0;
  int max_support_size = -1;  // -1: no cap (all of [p])
  bool include_empty = true;
  SingularPolicy singular_policy = SingularPolicy::kReject;
  bool keep_support_log = false;
};

struct SupportEval {
  std::vector<int> support;  // 0-based, ascending
  double objective = 0.0;    // minimized objective over this support
};

struct FitResult {
  Eigen::VectorXd beta;
  std::vector<int> support;  // 0-based nonzero coordinates of beta
  ObjectiveValue objective;
  double gamma = 0.0;
  double lambda = 0.0;
  std::vector<SupportEval> per_support_log;  // filled when keep_support_log
};

/// First-order system of the EILLS objective restricted to support S:
/// M(S) = sum_e w_e (G_SS + gamma G_SS^2), r(S) = sum_e w_e (I + gamma G_SS) c_S.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> restricted_normal_system(
    const SufficientStats& stats, const Eigen::VectorXd& weights,
    const std::vector<int>& support, double gamma);

/// Solves M(S) beta_S = r(S) and embeds the solution into a full-length beta
/// (zeros off S). Returns the beta and the EILLS objective value at it.
/// A system whose smallest eigenvalue is below 1e-10 times its largest is
/// singular: `kReject` throws SolverError, `kMinNorm` returns the
/// minimum-norm stationary point from the eigendecomposition.
std::pair<Eigen::VectorXd, ObjectiveValue> minimize_on_support(
    const SufficientStats& stats, const Eigen::VectorXd& weights,
    const std::vector<int>& support, double gamma,
    SingularPolicy policy = SingularPolicy::kReject);

/// Exact minimization of Q over all supports with |S| <= max_support_size
/// (plus the empty support when include_empty). Ties within 1e-12 relative
/// objective difference go to the smaller support, then to the
/// lexicographically smallest one. config.lambda is ignored.
FitResult exhaustive_eills(const SufficientStats& stats, const Eigen::VectorXd& weights,
                           const SearchConfig& config);

/// Exact minimization of Q + lambda * ||beta||_0; same enumeration and ties.
FitResult l0_exhaustive(const SufficientStats& stats, const Eigen::VectorXd& weights,
                        const SearchConfig& config);

/// One fit per gamma in an ascending grid; moment precomputation is shared,
/// per-support systems are re-solved (they depend on gamma).
std::vector<FitResult> gamma_path(const SufficientStats& stats, const Eigen::VectorXd& weights,
                                  const std::vector<double>& gamma_grid,
                                  const SearchConfig& config);

/// Pooled weighted least squares on a fixed support (gamma = 0 solve).
Eigen::VectorXd pooled_ols(const SufficientStats& stats, const Eigen::VectorXd& weights,
                           const std::vector<int>& support,
                           SingularPolicy policy = SingularPolicy::kReject);

namespace detail {

/// Minimized Q value for every enumerated support, in enumeration order
/// (size, then lexicographic), with supports packed as bitmasks. Shared by
/// the exhaustive solvers and the lambda sweeps in the bench harness; the
/// winning support is re-solved when a full fit is materialized.
struct SupportScan {
  std::vector<std::uint32_t> masks;
  std::vector<double> values;
  SingularPolicy policy = SingularPolicy::kReject;
};

SupportScan scan_supports(const SufficientStats& stats, const Eigen::VectorXd& weights,
                          const SearchConfig& config);

/// Applies the deterministic argmin / tie-break over a finished scan with an
/// extra lambda * |S| penalty (lambda = 0 for pure EILLS).
FitResult pick_minimum(const SupportScan& scan, const SufficientStats& stats,
                       const Eigen::VectorXd& weights, double gamma, double lambda);

std::vector<int> mask_to_support(std::uint32_t mask);

}  // namespace detail

}  // namespace eills
