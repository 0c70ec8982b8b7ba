#include "eills/scm_lab.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "eills/errors.hpp"

namespace eills {
namespace {

using Rng = std::mt19937_64;

// Kahn's algorithm on the nonzero pattern of B + alpha beta_star'.
// Returns the nodes left on a cycle (empty when acyclic). A nonzero diagonal
// entry is a self-loop (e.g. x_j -> y -> x_j collapsed through y).
std::vector<int> cycle_nodes(const Eigen::MatrixXd& adj) {
  const int p = static_cast<int>(adj.rows());
  std::vector<int> self_loops;
  for (int i = 0; i < p; ++i) {
    if (adj(i, i) != 0.0) self_loops.push_back(i);
  }
  if (!self_loops.empty()) return self_loops;
  std::vector<int> indegree(p, 0);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) {
      if (i != j && adj(i, j) != 0.0) ++indegree[i];  // edge j -> i
    }
  }
  std::vector<int> queue;
  for (int i = 0; i < p; ++i) {
    if (indegree[i] == 0) queue.push_back(i);
  }
  int removed = 0;
  while (!queue.empty()) {
    const int j = queue.back();
    queue.pop_back();
    ++removed;
    for (int i = 0; i < p; ++i) {
      if (i != j && adj(i, j) != 0.0 && --indegree[i] == 0) queue.push_back(i);
    }
  }
  std::vector<int> cyclic;
  if (removed < p) {
    for (int i = 0; i < p; ++i) {
      if (indegree[i] > 0) cyclic.push_back(i);
    }
  }
  return cyclic;
}

std::vector<double> parse_number_list(const std::string& text, const std::string& context) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    try {
      std::size_t pos = 0;
      values.push_back(std::stod(token, &pos));
      if (pos != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse '" + token + "' in " + context);
    }
  }
  return values;
}

}  // namespace

void LinearScmSpec::validate() const {
  const Eigen::Index dim = p();
  if (dim < 1) throw DataError("spec has no covariates");
  if (B.rows() != dim || B.cols() != dim || alpha.size() != dim || D_diag.size() != dim) {
    throw DataError("spec dimensions disagree");
  }
  if (v0.empty()) throw DataError("spec has no environments");
  for (double v : v0) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DataError("v0 entries must be positive");
  }
  if ((D_diag.array() < 0.0).any()) throw DataError("D diagonal entries must be nonnegative");
  if (!B.allFinite() || !alpha.allFinite() || !beta_star.allFinite() || !D_diag.allFinite()) {
    throw DataError("spec contains non-finite values");
  }
  const Eigen::MatrixXd adj = B + alpha * beta_star.transpose();
  const std::vector<int> cyclic = cycle_nodes(adj);
  if (!cyclic.empty()) {
    std::string nodes;
    for (int i : cyclic) nodes += (nodes.empty() ? "x" : ", x") + std::to_string(i + 1);
    throw DataError("spec graph is cyclic through {" + nodes + "}");
  }
}

Eigen::MatrixXd LinearScmSpec::total_effect() const {
  validate();
  const Eigen::Index dim = p();
  const Eigen::MatrixXd a =
      Eigen::MatrixXd::Identity(dim, dim) - B - alpha * beta_star.transpose();
  return a.partialPivLu().solve(Eigen::MatrixXd::Identity(dim, dim));
}

BenchmarkTag fig2_env1() {
  BenchmarkTag tag;
  tag.kind = BenchmarkTag::Kind::kFig2Env1;
  tag.env_id = "1";
  return tag;
}

BenchmarkTag fig2_env2() {
  BenchmarkTag tag;
  tag.kind = BenchmarkTag::Kind::kFig2Env2;
  tag.env_id = "2";
  return tag;
}

BenchmarkTag example1_env(double s, const std::string& env_id) {
  BenchmarkTag tag;
  tag.kind = BenchmarkTag::Kind::kExample1;
  tag.s = s;
  tag.env_id = env_id;
  return tag;
}

BenchmarkTag example_a1_env(double s, double h, double v1, double v2, double v0,
                            const std::string& env_id) {
  if (!(v1 > 0.0) || !(v2 > 0.0) || !(v0 > 0.0)) {
    throw ConfigError("example_a1 variances must be positive");
  }
  BenchmarkTag tag;
  tag.kind = BenchmarkTag::Kind::kExampleA1;
  tag.s = s;
  tag.h = h;
  tag.v1 = v1;
  tag.v2 = v2;
  tag.v0 = v0;
  tag.env_id = env_id;
  return tag;
}

BenchmarkTag oracle_gaussian(const Eigen::VectorXd& beta_star, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("oracle_gaussian sigma must be positive");
  if (beta_star.size() < 1 || !beta_star.allFinite()) {
    throw ConfigError("oracle_gaussian needs a finite nonempty beta_star");
  }
  BenchmarkTag tag;
  tag.kind = BenchmarkTag::Kind::kOracleGaussian;
  tag.sigma = sigma;
  tag.beta_star = beta_star;
  return tag;
}

EnvironmentSample sample_linear_scm(const LinearScmSpec& spec, int env, Eigen::Index n,
                                    std::uint64_t seed) {
  spec.validate();
  if (env < 0 || env >= spec.n_envs()) throw ConfigError("environment index out of range");
  if (n < 1) throw ConfigError("sample size must be at least 1");
  const Eigen::Index dim = spec.p();
  const Eigen::MatrixXd w = spec.total_effect();
  const Eigen::VectorXd noise_scale = spec.D_diag.cwiseSqrt();
  const double v0_scale = std::sqrt(spec.v0[static_cast<std::size_t>(env)]);

  Rng rng(seed);
  std::normal_distribution<double> normal;
  EnvironmentSample sample;
  sample.env_id = std::to_string(env + 1);
  sample.design.resize(n, dim);
  sample.response.resize(n);
  Eigen::VectorXd eps(dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double eps0 = v0_scale * normal(rng);
    for (Eigen::Index j = 0; j < dim; ++j) eps(j) = noise_scale(j) * normal(rng);
    const Eigen::VectorXd x = w * (eps + spec.alpha * eps0);
    sample.design.row(i) = x.transpose();
    sample.response(i) = spec.beta_star.dot(x) + eps0;
  }
  return sample;
}

namespace {

EnvironmentSample sample_fig2(bool env2, Eigen::Index n, std::uint64_t seed,
                              const std::string& env_id) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  EnvironmentSample sample;
  sample.env_id = env_id;
  sample.design.resize(n, 12);
  sample.response.resize(n);
  double u[13];
  for (Eigen::Index i = 0; i < n; ++i) {
    for (double& uj : u) uj = normal(rng);
    const double x1 = u[0];
    const double x4 = env2 ? u[3] * u[3] - 1.0 : u[3];
    const double x2 = std::sin(x4) + u[1];
    const double x3 = std::cos(x4) + u[2];
    const double x5 = std::sin(x3 + u[4]);
    const double x10 = 2.5 * x1 + 1.5 * x2 + u[9];
    const double y = 3.0 * x1 + 2.0 * x2 - 0.5 * x3 + u[12];
    const double x6 = 0.8 * y * u[5];
    const double x7 = env2 ? 4.0 * x3 + std::tanh(y) + u[6] : 0.5 * x3 + y + u[6];
    const double x8 = 0.5 * x7 - y + x10 + u[7];
    const double x9 = std::tanh(x7) + 0.1 * std::cos(x8) + u[8];
    const double x11 = 0.4 * (x7 + x8) * u[10];
    const double x12 = u[11];
    sample.design.row(i) << x1, x2, x3, x4, x5, x6, x7, x8, x9, x10, x11, x12;
    sample.response(i) = y;
  }
  return sample;
}

EnvironmentSample sample_toy(double s, double h, double v1, double v2, double v0,
                             Eigen::Index n, std::uint64_t seed, const std::string& env_id) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  EnvironmentSample sample;
  sample.env_id = env_id;
  sample.design.resize(n, 2);
  sample.response.resize(n);
  const double s1 = std::sqrt(v1), s2 = std::sqrt(v2), s0 = std::sqrt(v0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e0 = normal(rng), e1 = normal(rng), e2 = normal(rng);
    const double x1 = s1 * e1;
    const double y = x1 + s0 * e0;
    const double x2 = h * x1 + s * y + s2 * e2;
    sample.design(i, 0) = x1;
    sample.design(i, 1) = x2;
    sample.response(i) = y;
  }
  return sample;
}

EnvironmentSample sample_oracle(const Eigen::VectorXd& beta_star, double sigma, Eigen::Index n,
                                std::uint64_t seed, const std::string& env_id) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  const Eigen::Index dim = beta_star.size();
  EnvironmentSample sample;
  sample.env_id = env_id;
  sample.design.resize(n, dim);
  sample.response.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) sample.design(i, j) = sigma * normal(rng);
    sample.response(i) = beta_star.dot(sample.design.row(i)) + sigma * normal(rng);
  }
  return sample;
}

}  // namespace

EnvironmentSample sample_benchmark(const BenchmarkTag& tag, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample size must be at least 1");
  switch (tag.kind) {
    case BenchmarkTag::Kind::kFig2Env1:
      return sample_fig2(false, n, seed, tag.env_id);
    case BenchmarkTag::Kind::kFig2Env2:
      return sample_fig2(true, n, seed, tag.env_id);
    case BenchmarkTag::Kind::kExample1:
      return sample_toy(tag.s, 0.0, 0.5, 1.0, 0.5, n, seed, tag.env_id);
    case BenchmarkTag::Kind::kExampleA1:
      return sample_toy(tag.s, tag.h, tag.v1, tag.v2, tag.v0, n, seed, tag.env_id);
    case BenchmarkTag::Kind::kOracleGaussian:
      return sample_oracle(tag.beta_star, tag.sigma, n, seed, tag.env_id);
  }
  throw ConfigError("unknown benchmark tag");
}

BenchmarkSuite parse_benchmark(const std::string& text) {
  const std::size_t colon = text.find(':');
  const std::string name = text.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : text.substr(colon + 1);

  BenchmarkSuite suite;
  suite.name = name;
  if (name == "fig2") {
    if (!args.empty()) throw ConfigError("fig2 takes no parameters");
    suite.envs = {fig2_env1(), fig2_env2()};
    suite.beta_star = Eigen::VectorXd::Zero(12);
    suite.beta_star(0) = 3.0;
    suite.beta_star(1) = 2.0;
    suite.beta_star(2) = -0.5;
    suite.s_star = {0, 1, 2};
    suite.g_set = {6, 7, 8};
    return suite;
  }
  if (name == "example1") {
    const auto s = parse_number_list(args, "example1 parameters");
    if (s.size() != 2) throw ConfigError("example1 needs two parameters: s1,s2");
    suite.envs = {example1_env(s[0], "1"), example1_env(s[1], "2")};
    suite.beta_star = Eigen::VectorXd::Zero(2);
    suite.beta_star(0) = 1.0;
    suite.s_star = {0};
    if (s[0] != 0.0 || s[1] != 0.0) suite.g_set = {1};
    return suite;
  }
  if (name == "example_a1") {
    const auto v = parse_number_list(args, "example_a1 parameters");
    if (v.size() != 6) {
      throw ConfigError("example_a1 needs six parameters: s,h,v1,v2,v0_1,v0_2");
    }
    suite.envs = {example_a1_env(v[0], v[1], v[2], v[3], v[4], "1"),
                  example_a1_env(v[0], v[1], v[2], v[3], v[5], "2")};
    suite.beta_star = Eigen::VectorXd::Zero(2);
    suite.beta_star(0) = 1.0;
    suite.s_star = {0};
    if (v[0] != 0.0) suite.g_set = {1};
    return suite;
  }
  if (name == "oracle_gaussian") {
    const auto v = parse_number_list(args, "oracle_gaussian parameters");
    if (v.size() < 2) {
      throw ConfigError("oracle_gaussian needs parameters: sigma,b1,...,bp");
    }
    Eigen::VectorXd beta(static_cast<Eigen::Index>(v.size()) - 1);
    for (Eigen::Index j = 0; j < beta.size(); ++j) beta(j) = v[static_cast<std::size_t>(j) + 1];
    suite.envs = {oracle_gaussian(beta, v[0])};
    suite.beta_star = beta;
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
      if (beta(j) != 0.0) suite.s_star.push_back(static_cast<int>(j));
    }
    return suite;
  }
  throw ConfigError("unknown benchmark '" + name + "'");
}

MultiEnvDataset sample_suite(const BenchmarkSuite& suite, Eigen::Index n, std::uint64_t seed,
                             WeightScheme scheme) {
  if (suite.envs.empty()) throw ConfigError("benchmark suite has no environments");
  MultiEnvDataset dataset;
  for (std::size_t e = 0; e < suite.envs.size(); ++e) {
    dataset.environments.push_back(
        sample_benchmark(suite.envs[e], n, derive_seed(seed, e)));
  }
  dataset.weights = make_weights(dataset, scheme);
  dataset.validate();
  return dataset;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + (index + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace eills
