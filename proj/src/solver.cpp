#include "eills/solver.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>

#include "eills/errors.hpp"
#include "eills/parallel.hpp"

namespace eills {
namespace {

constexpr int kHardCapP = 30;
constexpr double kSingularRatio = 1e-10;
constexpr double kTieRelTol = 1e-12;
// Fixed batch width so the reduction order is a pure function of the input,
// independent of the thread budget.
constexpr std::size_t kBatchSize = 1024;

void check_inputs(const SufficientStats& stats, const Eigen::VectorXd& weights,
                  const SearchConfig& config) {
  if (weights.size() != stats.n_envs()) throw DataError("weight vector length mismatch");
  if (config.gamma < 0.0) throw ConfigError("gamma must be nonnegative");
  if (config.lambda < 0.0) throw ConfigError("lambda must be nonnegative");
  if (config.max_support_size > stats.p) {
    throw ConfigError("max_support_size exceeds the number of covariates");
  }
  if (config.max_support_size < -1) {
    throw ConfigError("max_support_size must be -1 (unbounded) or in [0, p]");
  }
}

int effective_cap(const SufficientStats& stats, const SearchConfig& config) {
  const int p = static_cast<int>(stats.p);
  const int cap = config.max_support_size < 0 ? p : config.max_support_size;
  if (p > kHardCapP && cap >= kHardCapP) {
    throw ConfigError("exhaustive search over p = " + std::to_string(p) +
                      " covariates is not feasible; set max_support_size to bound the "
                      "enumeration");
  }
  return cap;
}

// Supports of size `size` over [0, p) in lexicographic order, as bitmasks.
void enumerate_size(int p, int size, std::vector<std::uint32_t>& out) {
  std::vector<int> comb(size);
  std::iota(comb.begin(), comb.end(), 0);
  for (;;) {
    std::uint32_t mask = 0;
    for (int j : comb) mask |= (1u << j);
    out.push_back(mask);
    int i = size - 1;
    while (i >= 0 && comb[i] == p - size + i) --i;
    if (i < 0) break;
    ++comb[i];
    for (int k = i + 1; k < size; ++k) comb[k] = comb[k - 1] + 1;
  }
}

// True when (obj_a, a) is strictly preferred over (obj_b, b) under the
// tie-break: notably smaller objective, else smaller support, else
// lexicographically smaller index list. For equal sizes the lexicographic
// order is decided by the lowest differing bit.
bool strictly_better(double obj_a, std::uint32_t a, double obj_b, std::uint32_t b) {
  const double scale = std::max(std::abs(obj_a), std::abs(obj_b));
  if (obj_a < obj_b - kTieRelTol * scale) return true;
  if (obj_b < obj_a - kTieRelTol * scale) return false;
  if (a == b) return false;
  const int size_a = std::popcount(a), size_b = std::popcount(b);
  if (size_a != size_b) return size_a < size_b;
  const std::uint32_t diff = a ^ b;
  return (a & (diff & -diff)) != 0;
}

}  // namespace

std::pair<Eigen::MatrixXd, Eigen::VectorXd> restricted_normal_system(
    const SufficientStats& stats, const Eigen::VectorXd& weights,
    const std::vector<int>& support, double gamma) {
  const auto k = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(k);
  if (k == 0) return {m, r};
  Eigen::MatrixXd g_ss(k, k);
  Eigen::VectorXd c_s(k);
  for (Eigen::Index e = 0; e < stats.n_envs(); ++e) {
    const EnvStats& s = stats.envs[e];
    for (Eigen::Index a = 0; a < k; ++a) {
      c_s(a) = s.xty(support[a]);
      for (Eigen::Index b = 0; b < k; ++b) g_ss(a, b) = s.gram(support[a], support[b]);
    }
    m.noalias() += weights(e) * g_ss;
    r.noalias() += weights(e) * c_s;
    if (gamma != 0.0) {
      m.noalias() += (weights(e) * gamma) * (g_ss * g_ss);
      r.noalias() += (weights(e) * gamma) * (g_ss * c_s);
    }
  }
  m = 0.5 * (m + m.transpose()).eval();
  return {m, r};
}

std::pair<Eigen::VectorXd, ObjectiveValue> minimize_on_support(
    const SufficientStats& stats, const Eigen::VectorXd& weights,
    const std::vector<int>& support, double gamma, SingularPolicy policy) {
  for (int j : support) {
    if (j < 0 || j >= stats.p) throw DataError("support index out of range");
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(stats.p);
  if (!support.empty()) {
    auto [m, r] = restricted_normal_system(stats, weights, support, gamma);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    const Eigen::VectorXd& values = eig.eigenvalues();
    const double largest = values.maxCoeff();
    const double threshold = kSingularRatio * std::max(largest, 0.0);
    if (values.minCoeff() <= threshold) {
      if (policy == SingularPolicy::kReject) {
        throw SolverError("singular restricted system on a support of size " +
                          std::to_string(support.size()) +
                          "; the restricted Gram matrix is rank-deficient");
      }
      // Minimum-norm stationary point: invert only the stable eigenspace.
      Eigen::VectorXd proj = eig.eigenvectors().transpose() * r;
      for (Eigen::Index i = 0; i < proj.size(); ++i) {
        proj(i) = values(i) > threshold ? proj(i) / values(i) : 0.0;
      }
      const Eigen::VectorXd beta_s = eig.eigenvectors() * proj;
      for (std::size_t a = 0; a < support.size(); ++a) beta(support[a]) = beta_s(a);
    } else {
      const Eigen::VectorXd beta_s = eig.eigenvectors() *
          (eig.eigenvectors().transpose() * r).cwiseQuotient(values);
      for (std::size_t a = 0; a < support.size(); ++a) beta(support[a]) = beta_s(a);
    }
  }
  return {beta, eills_objective(stats, weights, beta, gamma)};
}

namespace detail {

std::vector<int> mask_to_support(std::uint32_t mask) {
  std::vector<int> support;
  for (int j = 0; mask != 0; ++j, mask >>= 1) {
    if (mask & 1u) support.push_back(j);
  }
  return support;
}

SupportScan scan_supports(const SufficientStats& stats, const Eigen::VectorXd& weights,
                          const SearchConfig& config) {
  check_inputs(stats, weights, config);
  const int p = static_cast<int>(stats.p);
  const int cap = effective_cap(stats, config);

  SupportScan scan;
  scan.policy = config.singular_policy;
  if (config.include_empty) scan.masks.push_back(0);
  for (int size = 1; size <= cap; ++size) enumerate_size(p, size, scan.masks);
  scan.values.resize(scan.masks.size());

  const std::size_t batches = (scan.masks.size() + kBatchSize - 1) / kBatchSize;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  parallel_for(batches, [&](std::size_t b) {
    const std::size_t begin = b * kBatchSize;
    const std::size_t end = std::min(begin + kBatchSize, scan.masks.size());
    for (std::size_t i = begin; i < end; ++i) {
      try {
        scan.values[i] = minimize_on_support(stats, weights, mask_to_support(scan.masks[i]),
                                             config.gamma, config.singular_policy)
                             .second.total;
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  });
  if (failure) std::rethrow_exception(failure);
  return scan;
}

FitResult pick_minimum(const SupportScan& scan, const SufficientStats& stats,
                       const Eigen::VectorXd& weights, double gamma, double lambda) {
  if (scan.masks.empty()) throw ConfigError("no supports enumerated");
  std::size_t best = 0;
  double best_obj = scan.values[0] + lambda * std::popcount(scan.masks[0]);
  for (std::size_t i = 1; i < scan.masks.size(); ++i) {
    const double obj = scan.values[i] + lambda * std::popcount(scan.masks[i]);
    if (strictly_better(obj, scan.masks[i], best_obj, scan.masks[best])) {
      best = i;
      best_obj = obj;
    }
  }
  FitResult result;
  result.beta = minimize_on_support(stats, weights, mask_to_support(scan.masks[best]), gamma,
                                    scan.policy)
                    .first;
  result.gamma = gamma;
  result.lambda = lambda;
  result.objective = l0_objective(stats, weights, result.beta, gamma, lambda);
  for (Eigen::Index j = 0; j < result.beta.size(); ++j) {
    if (result.beta(j) != 0.0) result.support.push_back(static_cast<int>(j));
  }
  return result;
}

}  // namespace detail

namespace {

std::vector<SupportEval> build_log(const detail::SupportScan& scan, double lambda) {
  std::vector<SupportEval> log;
  log.reserve(scan.masks.size());
  for (std::size_t i = 0; i < scan.masks.size(); ++i) {
    log.push_back(SupportEval{detail::mask_to_support(scan.masks[i]),
                              scan.values[i] + lambda * std::popcount(scan.masks[i])});
  }
  return log;
}

}  // namespace

FitResult exhaustive_eills(const SufficientStats& stats, const Eigen::VectorXd& weights,
                           const SearchConfig& config) {
  SearchConfig cfg = config;
  cfg.lambda = 0.0;
  detail::SupportScan scan = detail::scan_supports(stats, weights, cfg);
  FitResult result = detail::pick_minimum(scan, stats, weights, cfg.gamma, 0.0);
  if (config.keep_support_log) result.per_support_log = build_log(scan, 0.0);
  return result;
}

FitResult l0_exhaustive(const SufficientStats& stats, const Eigen::VectorXd& weights,
                        const SearchConfig& config) {
  detail::SupportScan scan = detail::scan_supports(stats, weights, config);
  FitResult result = detail::pick_minimum(scan, stats, weights, config.gamma, config.lambda);
  if (config.keep_support_log) result.per_support_log = build_log(scan, config.lambda);
  return result;
}

std::vector<FitResult> gamma_path(const SufficientStats& stats, const Eigen::VectorXd& weights,
                                  const std::vector<double>& gamma_grid,
                                  const SearchConfig& config) {
  if (gamma_grid.empty()) throw ConfigError("gamma grid is empty");
  if (!std::is_sorted(gamma_grid.begin(), gamma_grid.end())) {
    throw ConfigError("gamma grid must be ascending");
  }
  if (gamma_grid.front() < 0.0) throw ConfigError("gamma must be nonnegative");
  std::vector<FitResult> path;
  path.reserve(gamma_grid.size());
  for (double gamma : gamma_grid) {
    SearchConfig cfg = config;
    cfg.gamma = gamma;
    path.push_back(cfg.lambda > 0.0 ? l0_exhaustive(stats, weights, cfg)
                                    : exhaustive_eills(stats, weights, cfg));
  }
  return path;
}

Eigen::VectorXd pooled_ols(const SufficientStats& stats, const Eigen::VectorXd& weights,
                           const std::vector<int>& support, SingularPolicy policy) {
  return minimize_on_support(stats, weights, support, 0.0, policy).first;
}

}  // namespace eills
