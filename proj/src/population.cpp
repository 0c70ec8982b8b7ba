#include "eills/population.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eills/errors.hpp"

namespace eills {
namespace {

constexpr double kBiasTol = 1e-10;
constexpr double kDegenerateTol = 1e-12;
constexpr int kGammaStarCapP = 20;

void check_weights(const PopulationModel& model, const Eigen::VectorXd& weights) {
  if (weights.size() != model.n_envs()) throw DataError("weight vector length mismatch");
  if ((weights.array() <= 0.0).any()) throw DataError("weights must be positive");
  if (std::abs(weights.sum() - 1.0) > 1e-12) throw DataError("weights must sum to 1");
}

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& m, const std::vector<int>& rows,
                          const std::vector<int>& cols) {
  Eigen::MatrixXd out(rows.size(), cols.size());
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = 0; b < cols.size(); ++b) out(a, b) = m(rows[a], cols[b]);
  }
  return out;
}

Eigen::VectorXd subvector(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a) out(a) = v(idx[a]);
  return out;
}

PopulationModel from_env_specs(const std::vector<LinearScmSpec>& env_specs) {
  PopulationModel model;
  model.beta_star = env_specs.front().beta_star;
  for (const auto& spec : env_specs) {
    const PopulationModel part = population_moments(spec);
    model.sigma.push_back(part.sigma.front());
    model.bias.push_back(part.bias.front());
  }
  return model;
}

}  // namespace

std::vector<int> PopulationModel::s_star() const {
  std::vector<int> out;
  for (Eigen::Index j = 0; j < beta_star.size(); ++j) {
    if (beta_star(j) != 0.0) out.push_back(static_cast<int>(j));
  }
  return out;
}

PopulationModel population_moments(const LinearScmSpec& spec) {
  spec.validate();
  PopulationModel model;
  model.beta_star = spec.beta_star;
  model.W = spec.total_effect();
  model.alpha = spec.alpha;
  model.D_diag = spec.D_diag;
  model.has_structure = true;
  const Eigen::MatrixXd wdw =
      model.W * spec.D_diag.asDiagonal() * model.W.transpose();
  const Eigen::VectorXd u = model.W * spec.alpha;
  for (double v0 : spec.v0) {
    Eigen::MatrixXd sigma = wdw + v0 * (u * u.transpose());
    model.sigma.push_back(0.5 * (sigma + sigma.transpose()));
    model.bias.push_back(v0 * u);
  }
  return model;
}

PopulationModel example1_population(double s1, double s2) {
  std::vector<LinearScmSpec> specs;
  for (double s : {s1, s2}) {
    LinearScmSpec spec;
    spec.B = Eigen::MatrixXd::Zero(2, 2);
    spec.alpha = Eigen::Vector2d(0.0, s);
    spec.beta_star = Eigen::Vector2d(1.0, 0.0);
    spec.D_diag = Eigen::Vector2d(0.5, 1.0);
    spec.v0 = {0.5};
    specs.push_back(std::move(spec));
  }
  return from_env_specs(specs);
}

PopulationModel example_a1_population(double s, double h, double v1, double v2, double v0_1,
                                      double v0_2) {
  LinearScmSpec spec;
  spec.B = Eigen::MatrixXd::Zero(2, 2);
  spec.B(1, 0) = h;
  spec.alpha = Eigen::Vector2d(0.0, s);
  spec.beta_star = Eigen::Vector2d(1.0, 0.0);
  spec.D_diag = Eigen::Vector2d(v1, v2);
  spec.v0 = {v0_1, v0_2};
  return population_moments(spec);
}

std::vector<Eigen::VectorXd> best_linear_restricted(const PopulationModel& model,
                                                    const std::vector<int>& support) {
  const Eigen::Index p = model.p();
  for (int j : support) {
    if (j < 0 || j >= p) throw DataError("support index out of range");
  }
  std::vector<int> t;  // S* \ S
  for (int j : model.s_star()) {
    if (std::find(support.begin(), support.end(), j) == support.end()) t.push_back(j);
  }
  std::vector<Eigen::VectorXd> out;
  out.reserve(model.sigma.size());
  for (Eigen::Index e = 0; e < model.n_envs(); ++e) {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    if (!support.empty()) {
      const Eigen::MatrixXd sigma_s = submatrix(model.sigma[e], support, support);
      Eigen::VectorXd rhs = subvector(model.bias[e], support);
      if (!t.empty()) {
        rhs += submatrix(model.sigma[e], support, t) * subvector(model.beta_star, t);
      }
      Eigen::LDLT<Eigen::MatrixXd> ldlt(sigma_s);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
          ldlt.vectorD().minCoeff() <= 0.0) {
        throw DataError("restricted covariance is singular on the requested support");
      }
      const Eigen::VectorXd shift = ldlt.solve(rhs);
      for (std::size_t a = 0; a < support.size(); ++a) {
        beta(support[a]) = model.beta_star(support[a]) + shift(a);
      }
    }
    out.push_back(std::move(beta));
  }
  return out;
}

SupportDiagnostics support_diagnostics(const PopulationModel& model,
                                       const std::vector<int>& support,
                                       const Eigen::VectorXd& weights) {
  check_weights(model, weights);
  SupportDiagnostics diag;
  diag.support = support;
  diag.beta_restricted = best_linear_restricted(model, support);

  Eigen::VectorXd pooled_bias = Eigen::VectorXd::Zero(support.size());
  Eigen::VectorXd mean_beta = Eigen::VectorXd::Zero(model.p());
  for (Eigen::Index e = 0; e < model.n_envs(); ++e) {
    const Eigen::VectorXd bias_s = subvector(model.bias[e], support);
    pooled_bias += weights(e) * bias_s;
    diag.b_bar += weights(e) * bias_s.squaredNorm();
    mean_beta += weights(e) * diag.beta_restricted[e];
  }
  diag.b = pooled_bias.squaredNorm();
  for (Eigen::Index e = 0; e < model.n_envs(); ++e) {
    diag.d_bar += weights(e) * (diag.beta_restricted[e] - mean_beta).squaredNorm();
  }
  const double kappa_lower = kappa_bounds(model).first;
  diag.v_star = 0.5 * kappa_lower * kappa_lower * diag.d_bar;

  // xi = 1 - alpha' W_S' (W_S D W_S')^-1 W_S D W_T' beta*_T with T = S* \ S;
  // equals 1 whenever T is empty or the support carries no bias.
  std::vector<int> t;
  for (int j : model.s_star()) {
    if (std::find(support.begin(), support.end(), j) == support.end()) t.push_back(j);
  }
  if (t.empty() || support.empty()) {
    diag.xi = 1.0;
  } else if (model.has_structure) {
    std::vector<int> all(model.p());
    for (Eigen::Index j = 0; j < model.p(); ++j) all[j] = static_cast<int>(j);
    const Eigen::MatrixXd w_s = submatrix(model.W, support, all);
    const Eigen::MatrixXd w_t = submatrix(model.W, t, all);
    const Eigen::MatrixXd m_s = w_s * model.D_diag.asDiagonal() * w_s.transpose();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(m_s);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0) {
      diag.xi = std::numeric_limits<double>::quiet_NaN();
    } else {
      const Eigen::VectorXd u_s = w_s * model.alpha;
      const Eigen::VectorXd rhs =
          w_s * model.D_diag.asDiagonal() * w_t.transpose() * subvector(model.beta_star, t);
      diag.xi = 1.0 - u_s.dot(ldlt.solve(rhs));
    }
  } else {
    const auto [g, g_omega] = spurious_sets(model, weights);
    const bool touches = std::any_of(support.begin(), support.end(), [&](int j) {
      return std::find(g_omega.begin(), g_omega.end(), j) != g_omega.end();
    });
    diag.xi = touches ? std::numeric_limits<double>::quiet_NaN() : 1.0;
  }
  return diag;
}

std::pair<std::vector<int>, std::vector<int>> spurious_sets(const PopulationModel& model,
                                                            const Eigen::VectorXd& weights,
                                                            double tol) {
  check_weights(model, weights);
  if (!(tol > 0.0)) throw ConfigError("tolerance must be positive");
  std::vector<int> g, g_omega;
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(model.p());
  for (Eigen::Index e = 0; e < model.n_envs(); ++e) pooled += weights(e) * model.bias[e];
  for (Eigen::Index j = 0; j < model.p(); ++j) {
    bool any = false;
    for (Eigen::Index e = 0; e < model.n_envs(); ++e) {
      if (std::abs(model.bias[e](j)) > tol) any = true;
    }
    if (any) g.push_back(static_cast<int>(j));
    if (std::abs(pooled(j)) > tol) g_omega.push_back(static_cast<int>(j));
  }
  return {g, g_omega};
}

namespace {

// Pooled-bias norm b_S and predictor spread d_bar_S without the eigenvalue
// work support_diagnostics performs; shared by the gamma_star enumeration.
std::pair<double, double> bias_and_spread(const PopulationModel& model,
                                          const std::vector<int>& support,
                                          const Eigen::VectorXd& weights) {
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(support.size());
  for (Eigen::Index e = 0; e < model.n_envs(); ++e) {
    pooled += weights(e) * subvector(model.bias[e], support);
  }
  const auto betas = best_linear_restricted(model, support);
  Eigen::VectorXd mean_beta = Eigen::VectorXd::Zero(model.p());
  for (Eigen::Index e = 0; e < model.n_envs(); ++e) mean_beta += weights(e) * betas[e];
  double spread = 0.0;
  for (Eigen::Index e = 0; e < model.n_envs(); ++e) {
    spread += weights(e) * (betas[e] - mean_beta).squaredNorm();
  }
  return {pooled.squaredNorm(), spread};
}

}  // namespace

double gamma_star(const PopulationModel& model, const Eigen::VectorXd& weights) {
  check_weights(model, weights);
  const int p = static_cast<int>(model.p());
  if (p > kGammaStarCapP) {
    throw ConfigError("gamma_star enumeration is capped at p <= " +
                      std::to_string(kGammaStarCapP));
  }
  const auto [g, g_omega] = spurious_sets(model, weights);
  if (g_omega.empty()) return 0.0;

  std::uint32_t g_mask = 0;
  for (int j : g_omega) g_mask |= (1u << j);

  const double kappa_lower = kappa_bounds(model).first;
  double max_ratio = 0.0;
  for (std::uint32_t mask = 1; mask < (1u << p); ++mask) {
    if ((mask & g_mask) == 0) continue;
    std::vector<int> support;
    for (int j = 0; j < p; ++j) {
      if (mask & (1u << j)) support.push_back(j);
    }
    const auto [b, d_bar] = bias_and_spread(model, support, weights);
    if (d_bar <= kDegenerateTol) {
      if (b > kDegenerateTol) return std::numeric_limits<double>::infinity();
      continue;
    }
    max_ratio = std::max(max_ratio, b / d_bar);
  }
  return max_ratio / (kappa_lower * kappa_lower * kappa_lower);
}

Eigen::VectorXd pooled_ls_limit(const PopulationModel& model, const Eigen::VectorXd& weights) {
  check_weights(model, weights);
  Eigen::MatrixXd sigma_bar = Eigen::MatrixXd::Zero(model.p(), model.p());
  Eigen::VectorXd pooled_bias = Eigen::VectorXd::Zero(model.p());
  for (Eigen::Index e = 0; e < model.n_envs(); ++e) {
    sigma_bar += weights(e) * model.sigma[e];
    pooled_bias += weights(e) * model.bias[e];
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(sigma_bar);
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0) {
    throw DataError("pooled covariance matrix is singular");
  }
  return model.beta_star + ldlt.solve(pooled_bias);
}

std::pair<double, double> kappa_bounds(const PopulationModel& model) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const auto& sigma : model.sigma) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
    lo = std::min(lo, eig.eigenvalues().minCoeff());
    hi = std::max(hi, eig.eigenvalues().maxCoeff());
  }
  return {lo, hi};
}

PopulationSummary summarize(const PopulationModel& model, const Eigen::VectorXd& weights) {
  PopulationSummary summary;
  summary.sigma = model.sigma;
  summary.bias = model.bias;
  std::tie(summary.spurious, summary.pooled_spurious) = spurious_sets(model, weights);
  std::tie(summary.kappa_lower, summary.kappa_upper) = kappa_bounds(model);
  summary.pooled_limit = pooled_ls_limit(model, weights);
  summary.gamma_star = gamma_star(model, weights);
  return summary;
}

}  // namespace eills
