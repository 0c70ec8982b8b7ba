#include "eills/objective.hpp"

#include <algorithm>
#include <cmath>

#include "eills/errors.hpp"

namespace eills {
namespace {

void check_dims(const SufficientStats& stats, const Eigen::VectorXd& weights,
                const Eigen::VectorXd& beta) {
  if (beta.size() != stats.p) {
    throw DataError("beta has length " + std::to_string(beta.size()) + ", expected " +
                    std::to_string(stats.p));
  }
  if (weights.size() != stats.n_envs()) {
    throw DataError("weight vector length mismatch");
  }
}

}  // namespace

double pooled_risk(const SufficientStats& stats, const Eigen::VectorXd& weights,
                   const Eigen::VectorXd& beta) {
  check_dims(stats, weights, beta);
  double risk = 0.0;
  for (Eigen::Index e = 0; e < stats.n_envs(); ++e) {
    const EnvStats& s = stats.envs[e];
    risk += weights(e) *
            (beta.dot(s.gram * beta) - 2.0 * s.xty.dot(beta) + s.yty);
  }
  return std::max(risk, 0.0);
}

double invariance_reg(const SufficientStats& stats, const Eigen::VectorXd& weights,
                      const Eigen::VectorXd& beta) {
  check_dims(stats, weights, beta);
  double reg = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (beta(j) == 0.0) continue;
    for (Eigen::Index e = 0; e < stats.n_envs(); ++e) {
      const EnvStats& s = stats.envs[e];
      const double moment = s.xty(j) - s.gram.row(j).dot(beta);
      reg += weights(e) * moment * moment;
    }
  }
  return reg;
}

double enhanced_reg(const SufficientStats& stats, const Eigen::VectorXd& weights,
                    const Eigen::VectorXd& beta, FeatureTag feature) {
  check_dims(stats, weights, beta);
  for (const auto& env : stats.envs) {
    if (env.features.find(feature) == env.features.end()) {
      throw ConfigError("sufficient statistics carry no moments for the requested feature");
    }
  }
  double reg = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (beta(j) == 0.0) continue;
    for (Eigen::Index e = 0; e < stats.n_envs(); ++e) {
      const EnvStats& s = stats.envs[e];
      const FeatureMoments& fm = s.features.at(feature);
      const double lin = s.xty(j) - s.gram.row(j).dot(beta);
      const double feat = fm.hxy(j) - fm.hxx.row(j).dot(beta);
      reg += weights(e) * (lin * lin + feat * feat);
    }
  }
  return reg;
}

ObjectiveValue eills_objective(const SufficientStats& stats, const Eigen::VectorXd& weights,
                               const Eigen::VectorXd& beta, double gamma) {
  if (gamma < 0.0) throw ConfigError("gamma must be nonnegative");
  ObjectiveValue v;
  v.risk = pooled_risk(stats, weights, beta);
  v.reg = invariance_reg(stats, weights, beta);
  v.penalty = 0.0;
  v.total = v.risk + gamma * v.reg;
  return v;
}

ObjectiveValue l0_objective(const SufficientStats& stats, const Eigen::VectorXd& weights,
                            const Eigen::VectorXd& beta, double gamma, double lambda) {
  if (lambda < 0.0) throw ConfigError("lambda must be nonnegative");
  ObjectiveValue v = eills_objective(stats, weights, beta, gamma);
  const auto nnz = static_cast<double>((beta.array() != 0.0).count());
  v.penalty = lambda * nnz;
  v.total += v.penalty;
  return v;
}

}  // namespace eills
