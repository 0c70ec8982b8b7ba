#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "eills/env_data.hpp"
#include "eills/errors.hpp"
#include "eills/population.hpp"
#include "eills/scm_lab.hpp"
#include "eills/solver.hpp"

using namespace eills;

namespace {

const Eigen::Vector2d kEqualWeights{0.5, 0.5};

LinearScmSpec exogenous_spec() {
  LinearScmSpec spec;
  spec.B = Eigen::MatrixXd::Zero(3, 3);
  spec.B(2, 0) = 0.4;  // x3 <- x1
  spec.alpha = Eigen::VectorXd::Zero(3);
  spec.beta_star = Eigen::Vector3d(1.0, -0.5, 0.0);
  spec.D_diag = Eigen::Vector3d(1.0, 0.7, 0.3);
  spec.v0 = {0.5, 1.5};
  return spec;
}

}  // namespace

TEST_CASE("population moments of an exogenous spec") {
  const PopulationModel model = population_moments(exogenous_spec());
  CHECK(model.bias[0].isZero());
  CHECK(model.bias[1].isZero());
  CHECK((model.sigma[0] - model.sigma[1]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("example1 analytic moments") {
  const PopulationModel model = example1_population(1.0, -0.5);
  Eigen::Matrix2d sigma1;
  sigma1 << 0.5, 0.5, 0.5, 2.0;
  CHECK((model.sigma[0] - sigma1).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(model.bias[0](0) == 0.0);
  CHECK(model.bias[0](1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(model.bias[1](1) == doctest::Approx(-0.25).epsilon(1e-15));
}

TEST_CASE("analytic covariance matches a Monte Carlo draw") {
  const PopulationModel model = example1_population(1.0, -0.5);
  for (int e = 0; e < 2; ++e) {
    const double s = e == 0 ? 1.0 : -0.5;
    const EnvironmentSample sample = sample_benchmark(example1_env(s), 100000, 60 + e);
    const Eigen::MatrixXd cov =
        sample.design.transpose() * sample.design / static_cast<double>(sample.n());
    CHECK((cov - model.sigma[e]).cwiseAbs().maxCoeff() <= 0.02);
  }
}

TEST_CASE("best linear restricted predictor") {
  const PopulationModel model = example1_population(1.0, -0.5);

  SUBCASE("S = S* gives beta* in every environment") {
    const auto betas = best_linear_restricted(model, {0});
    for (const auto& beta : betas) {
      CHECK(beta(0) == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(beta(1) == 0.0);
    }
  }
  SUBCASE("empty support gives zero") {
    const auto betas = best_linear_restricted(model, {});
    CHECK(betas[0].isZero());
    CHECK(betas[1].isZero());
  }
  SUBCASE("single spurious coordinate matches the scalar formula") {
    const auto betas = best_linear_restricted(model, {1});
    // beta2 = Cov(x2, y) / Var(x2) = s / (s^2 + 1)
    CHECK(betas[0](1) == doctest::Approx(1.0 / 2.0).epsilon(1e-12));
    CHECK(betas[1](1) == doctest::Approx(-0.5 / 1.25).epsilon(1e-12));
  }
  SUBCASE("reciprocal strengths share one conditional expectation") {
    const PopulationModel tied = example1_population(2.0, 0.5);
    const auto betas = best_linear_restricted(tied, {1});
    CHECK(betas[0](1) == doctest::Approx(2.0 / 5.0).epsilon(1e-12));
    CHECK(betas[1](1) == doctest::Approx(betas[0](1)).epsilon(1e-12));
  }
}

TEST_CASE("support diagnostics") {
  const PopulationModel model = example1_population(1.0, -0.5);

  SUBCASE("S = S* has no bias and no spread") {
    const SupportDiagnostics diag = support_diagnostics(model, {0}, kEqualWeights);
    CHECK(diag.b == 0.0);
    CHECK(diag.b_bar == 0.0);
    CHECK(diag.d_bar == 0.0);
    CHECK(diag.xi == 1.0);
  }
  SUBCASE("S = {2} matches the hand-computed pooled bias") {
    const SupportDiagnostics diag = support_diagnostics(model, {1}, kEqualWeights);
    CHECK(diag.b == doctest::Approx(0.015625).epsilon(1e-12));
    // b_bar = 0.5 * (0.5^2 + 0.25^2)
    CHECK(diag.b_bar == doctest::Approx(0.15625).epsilon(1e-12));
    CHECK(diag.d_bar > 0.0);
    const auto [lo, hi] = kappa_bounds(model);
    CHECK(diag.v_star == doctest::Approx(0.5 * lo * lo * diag.d_bar));
  }
  SUBCASE("supports without bias are clean") {
    const PopulationModel clean = population_moments(exogenous_spec());
    const Eigen::Vector2d w{0.5, 0.5};
    const SupportDiagnostics diag = support_diagnostics(clean, {0, 1, 2}, w);
    CHECK(diag.b == 0.0);
    CHECK(diag.d_bar == doctest::Approx(0.0).epsilon(1e-20));
  }
}

TEST_CASE("spurious sets") {
  SUBCASE("example1 with asymmetric s") {
    const PopulationModel model = example1_population(1.0, -0.5);
    const auto [g, g_omega] = spurious_sets(model, kEqualWeights);
    CHECK(g == std::vector<int>{1});
    CHECK(g_omega == std::vector<int>{1});
  }
  SUBCASE("exactly cancelling biases leave G_omega empty") {
    const PopulationModel model = example1_population(1.0, -1.0);
    const auto [g, g_omega] = spurious_sets(model, kEqualWeights);
    CHECK(g == std::vector<int>{1});
    CHECK(g_omega.empty());
  }
  SUBCASE("exogenous spec has no spurious variables") {
    const PopulationModel model = population_moments(exogenous_spec());
    const auto [g, g_omega] = spurious_sets(model, kEqualWeights);
    CHECK(g.empty());
    CHECK(g_omega.empty());
  }
}

TEST_CASE("gamma_star identification boundary") {
  SUBCASE("identical environments are non-identifiable") {
    CHECK(std::isinf(gamma_star(example1_population(1.5, 1.5), kEqualWeights)));
  }
  SUBCASE("reciprocal feedback strengths are non-identifiable") {
    CHECK(std::isinf(gamma_star(example1_population(2.0, 0.5), kEqualWeights)));
  }
  SUBCASE("generic pairs are identifiable") {
    const double value = gamma_star(example1_population(1.0, -0.5), kEqualWeights);
    CHECK(std::isfinite(value));
    CHECK(value > 0.0);
  }
  SUBCASE("no spurious variables reports zero") {
    CHECK(gamma_star(population_moments(exogenous_spec()), kEqualWeights) == 0.0);
  }
  SUBCASE("scaling tracks the closed-form rate up to a bounded factor") {
    // sqrt(b/d) against |s1+s2| / (|s2-s1| |1-s1 s2|) on S = {2}.
    const double pairs[5][2] = {
        {1.0, -0.5}, {0.5, -1.0}, {1.0, 0.5}, {0.75, -0.75}, {1.0, -1.0}};
    for (const auto& pair : pairs) {
      const double s1 = pair[0], s2 = pair[1];
      const PopulationModel model = example1_population(s1, s2);
      const SupportDiagnostics diag = support_diagnostics(model, {1}, kEqualWeights);
      if (std::abs(s1 + s2) < 1e-12) {
        CHECK(diag.b <= 1e-24);
        continue;
      }
      const double lhs = std::sqrt(diag.b / diag.d_bar);
      const double rhs =
          std::abs(s1 + s2) / (std::abs(s2 - s1) * std::abs(1.0 - s1 * s2));
      CHECK(lhs / rhs >= 0.25);
      CHECK(lhs / rhs <= 4.0);
    }
  }
  SUBCASE("environment relabeling does not change gamma_star") {
    const double a = gamma_star(example1_population(1.0, -0.5), kEqualWeights);
    const double b = gamma_star(example1_population(-0.5, 1.0), kEqualWeights);
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }
}

TEST_CASE("pooled least squares limit") {
  SUBCASE("zero bias gives beta* back") {
    const PopulationModel model = population_moments(exogenous_spec());
    const Eigen::Vector2d w{0.5, 0.5};
    CHECK((pooled_ls_limit(model, w) - model.beta_star).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("example1 matches a direct 2x2 solve") {
    const PopulationModel model = example1_population(1.0, -0.5);
    const Eigen::MatrixXd sigma_bar = 0.5 * (model.sigma[0] + model.sigma[1]);
    const Eigen::Vector2d pooled_bias = 0.5 * (model.bias[0] + model.bias[1]);
    const Eigen::Vector2d expected =
        model.beta_star + sigma_bar.inverse() * pooled_bias;
    CHECK((pooled_ls_limit(model, kEqualWeights) - expected).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("sanity bounds from the eigenvalue range") {
    const PopulationModel model = example1_population(1.0, -0.5);
    const Eigen::VectorXd limit = pooled_ls_limit(model, kEqualWeights);
    const Eigen::Vector2d pooled_bias = 0.5 * (model.bias[0] + model.bias[1]);
    const auto [lo, hi] = kappa_bounds(model);
    const double gap = (limit - model.beta_star).norm();
    CHECK(gap >= pooled_bias.norm() / hi - 1e-12);
    CHECK(gap <= pooled_bias.norm() / lo + 1e-12);
  }
  SUBCASE("large-sample pooled OLS converges to the limit") {
    const PopulationModel model = example1_population(1.0, -0.5);
    const BenchmarkSuite suite = parse_benchmark("example1:1,-0.5");
    const MultiEnvDataset data = sample_suite(suite, 1000000, 10, WeightScheme::kEqual);
    const SufficientStats stats = compute_stats(data);
    const Eigen::VectorXd ols = pooled_ols(stats, data.weights, {0, 1});
    CHECK((ols - pooled_ls_limit(model, kEqualWeights)).cwiseAbs().maxCoeff() <= 0.01);
  }
}

TEST_CASE("model-level properties") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.3, 2.0);

  for (int trial = 0; trial < 10; ++trial) {
    // random acyclic spec: strictly lower-triangular B, y fed by x1
    const int p = 3 + static_cast<int>(rng() % 3);
    LinearScmSpec spec;
    spec.B = Eigen::MatrixXd::Zero(p, p);
    for (int i = 1; i < p; ++i) {
      for (int j = 0; j < i; ++j) {
        if (rng() % 2 == 0) spec.B(i, j) = 0.5 * normal(rng);
      }
    }
    spec.alpha = Eigen::VectorXd::Zero(p);
    spec.alpha(p - 1) = normal(rng);  // y feeds the last variable only
    spec.beta_star = Eigen::VectorXd::Zero(p);
    spec.beta_star(0) = 1.0 + unif(rng);
    spec.D_diag = Eigen::VectorXd::NullaryExpr(p, [&](Eigen::Index) { return unif(rng); });
    spec.v0 = {unif(rng), unif(rng)};
    const PopulationModel model = population_moments(spec);
    const Eigen::Vector2d w{0.5, 0.5};

    // bias vanishes on S*
    for (int j : model.s_star()) {
      CHECK(model.bias[0](j) == doctest::Approx(0.0).epsilon(1e-12));
    }
    // G_omega subset of G
    const auto [g, g_omega] = spurious_sets(model, w);
    for (int j : g_omega) {
      CHECK(std::find(g.begin(), g.end(), j) != g.end());
    }
    // any S inside S* has no bias and no spread
    const SupportDiagnostics diag = support_diagnostics(model, model.s_star(), w);
    CHECK(diag.b <= 1e-20);
    CHECK(diag.d_bar <= 1e-20);
    CHECK(diag.b <= diag.b_bar + 1e-20);

    // kappa bounds really bound every eigenvalue
    const auto [lo, hi] = kappa_bounds(model);
    for (const auto& sigma : model.sigma) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
      CHECK(eig.eigenvalues().minCoeff() >= lo - 1e-12);
      CHECK(eig.eigenvalues().maxCoeff() <= hi + 1e-12);
    }
  }
}

TEST_CASE("restricted predictor minimizes the restricted population risk") {
  const PopulationModel model = example1_population(0.8, -0.6);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  for (int e = 0; e < 2; ++e) {
    for (const std::vector<int>& support : {std::vector<int>{1}, std::vector<int>{0, 1}}) {
      const auto betas = best_linear_restricted(model, support);
      // population risk up to a constant: q(b) = b' Sigma b - 2 b' (Sigma beta* + bias)
      const Eigen::MatrixXd& sigma = model.sigma[e];
      const Eigen::VectorXd target = sigma * model.beta_star + model.bias[e];
      auto q = [&](const Eigen::VectorXd& b) { return b.dot(sigma * b) - 2.0 * b.dot(target); };
      const double base = q(betas[e]);
      for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd perturbed = betas[e];
        for (int j : support) perturbed(j) += 0.3 * normal(rng);
        CHECK(q(perturbed) >= base - 1e-12);
      }
    }
  }
}

TEST_CASE("xi diagnostic for structured models") {
  // With alpha supported off S* and S >= S*, xi = 1; on spurious-touching
  // supports it reproduces the closed form for the heterogeneous toy.
  const PopulationModel model = example_a1_population(0.8, 0.6, 1.0, 0.5, 0.5, 2.0);
  const SupportDiagnostics full = support_diagnostics(model, {0, 1}, kEqualWeights);
  CHECK(full.xi == 1.0);

  const SupportDiagnostics spur = support_diagnostics(model, {1}, kEqualWeights);
  // hand form: xi({2}) = 1 - alpha' W_S' (W_S D W_S')^-1 W_S D W_T' beta*_T
  // with W = [[1,0],[h+s,1]], S = {2}, T = {1}.
  const double h = 0.6, s = 0.8, v1 = 1.0, v2 = 0.5;
  const double w21 = h + s;
  const double m = w21 * w21 * v1 + v2;            // W_S D W_S'
  const double cross = w21 * v1;                   // W_S D W_T'
  const double xi_expected = 1.0 - s * (1.0 / m) * cross * 1.0;
  CHECK(spur.xi == doctest::Approx(xi_expected).epsilon(1e-12));
}
