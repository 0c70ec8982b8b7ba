#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "eills/scm_lab.hpp"

namespace eills {

/// Analytic per-environment moments of a linear SCM: covariance matrices
/// Sigma^(e) and bias vectors E[eps^(e) x^(e)], plus the true coefficients.
/// When every environment shares one (W, alpha, D) structure it is kept for
/// the xi diagnostic.
struct PopulationModel {
  Eigen::VectorXd beta_star;
  std::vector<Eigen::MatrixXd> sigma;
  std::vector<Eigen::VectorXd> bias;

  bool has_structure = false;
  Eigen::MatrixXd W;
  Eigen::VectorXd alpha;
  Eigen::VectorXd D_diag;

  Eigen::Index p() const { return beta_star.size(); }
  Eigen::Index n_envs() const { return static_cast<Eigen::Index>(sigma.size()); }
  std::vector<int> s_star() const;
};

/// Derived summary: spurious sets, eigenvalue bounds, pooled least squares
/// limit, and the identification threshold gamma_star.
struct PopulationSummary {
  std::vector<Eigen::MatrixXd> sigma;
  std::vector<Eigen::VectorXd> bias;
  std::vector<int> spurious;         // G, 0-based
  std::vector<int> pooled_spurious;  // G_omega, 0-based
  double kappa_lower = 0.0;
  double kappa_upper = 0.0;
  Eigen::VectorXd pooled_limit;
  double gamma_star = 0.0;  // +inf when non-identifiable, 0 when no spurious supports
};

/// Per-support identification quantities: bias norms, predictor spread
/// across environments, and the curvature floor they induce.
struct SupportDiagnostics {
  std::vector<int> support;                      // 0-based
  std::vector<Eigen::VectorXd> beta_restricted;  // per environment, full length
  double b = 0.0;       // squared norm of the pooled bias on S
  double b_bar = 0.0;   // omega-average of per-env squared bias norms
  double d_bar = 0.0;   // omega-weighted spread of restricted predictors
  double v_star = 0.0;  // kappa_L^2 * d_bar / 2
  double xi = 1.0;      // NaN when undefined for the model
};

/// Sigma^(e) = W D W' + v0^(e) u u' and bias^(e) = v0^(e) u with u = W alpha.
PopulationModel population_moments(const LinearScmSpec& spec);

/// The two-environment p = 2 toy with per-environment feedback strength s:
/// x1 = sqrt(0.5) e1, y = x1 + sqrt(0.5) e0, x2 = s^(e) y + e2.
PopulationModel example1_population(double s1, double s2);

PopulationModel example_a1_population(double s, double h, double v1, double v2, double v0_1,
                                      double v0_2);

/// Population best linear predictor constrained on S for each environment:
/// beta_S = beta*_S + (Sigma_S)^-1 (bias_S + Sigma_{S,T} beta*_T), T = S* \ S.
std::vector<Eigen::VectorXd> best_linear_restricted(const PopulationModel& model,
                                                    const std::vector<int>& support);

SupportDiagnostics support_diagnostics(const PopulationModel& model,
                                       const std::vector<int>& support,
                                       const Eigen::VectorXd& weights);

/// G = {j : some env has |bias_j| > tol}; G_omega uses the pooled bias.
std::pair<std::vector<int>, std::vector<int>> spurious_sets(const PopulationModel& model,
                                                            const Eigen::VectorXd& weights,
                                                            double tol = 1e-10);

/// kappa_L^-3 * max over supports touching G_omega of b_S / d_bar_S.
/// Returns +inf when some such support has positive bias but no predictor
/// heterogeneity, and 0 when no support touches G_omega.
double gamma_star(const PopulationModel& model, const Eigen::VectorXd& weights);

/// Probability limit of pooled least squares:
/// beta* + (sum_e w_e Sigma^(e))^-1 sum_e w_e bias^(e).
Eigen::VectorXd pooled_ls_limit(const PopulationModel& model, const Eigen::VectorXd& weights);

/// (min, max) eigenvalue over all environment covariances.
std::pair<double, double> kappa_bounds(const PopulationModel& model);

PopulationSummary summarize(const PopulationModel& model, const Eigen::VectorXd& weights);

}  // namespace eills
