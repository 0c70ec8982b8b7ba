#pragma once

#include <Eigen/Dense>

#include "eills/env_data.hpp"

namespace eills {

/// Decomposition of an evaluated objective. `total` always equals
/// risk + gamma * reg + penalty for the gamma used in the call.
struct ObjectiveValue {
  double risk = 0.0;     // pooled L2 loss
  double reg = 0.0;      // focused invariance regularizer
  double penalty = 0.0;  // lambda * ||beta||_0
  double total = 0.0;
};

/// Pooled weighted empirical L2 loss evaluated from sufficient statistics:
/// sum_e w_e (beta' G_e beta - 2 c_e' beta + yty_e).
double pooled_risk(const SufficientStats& stats, const Eigen::VectorXd& weights,
                   const Eigen::VectorXd& beta);

/// Focused linear invariance regularizer. Support membership is an exact
/// beta_j != 0 test; each active coordinate contributes the squared weighted
/// empirical covariance between x_j and the fitted residual.
double invariance_reg(const SufficientStats& stats, const Eigen::VectorXd& weights,
                      const Eigen::VectorXd& beta);

/// Enhanced regularizer adding the squared residual moment of a marginal
/// nonlinear feature h(x_j) on top of the linear one. Requires the stats to
/// carry moments for `feature`.
double enhanced_reg(const SufficientStats& stats, const Eigen::VectorXd& weights,
                    const Eigen::VectorXd& beta, FeatureTag feature);

/// Q(beta) = pooled_risk + gamma * invariance_reg.
ObjectiveValue eills_objective(const SufficientStats& stats, const Eigen::VectorXd& weights,
                               const Eigen::VectorXd& beta, double gamma);

/// L(beta) = Q(beta) + lambda * ||beta||_0.
ObjectiveValue l0_objective(const SufficientStats& stats, const Eigen::VectorXd& weights,
                            const Eigen::VectorXd& beta, double gamma, double lambda);

}  // namespace eills
