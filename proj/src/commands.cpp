#include "eills/commands.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "eills/errors.hpp"
#include "eills/objective.hpp"
#include "eills/parallel.hpp"
#include "eills/population.hpp"
#include "eills/scm_lab.hpp"
#include "eills/solver.hpp"
#include "eills/svg.hpp"

namespace eills {
namespace {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

json one_based(const std::vector<int>& idx) {
  json out = json::array();
  for (int j : idx) out.push_back(j + 1);
  return out;
}

MultiEnvDataset resolve_dataset(const ExperimentConfig& config) {
  if (!config.input.empty() && !config.benchmark.empty()) {
    throw ConfigError("give either --input or --benchmark, not both");
  }
  if (!config.input.empty()) {
    LoadOptions options;
    options.center = config.center;
    options.weights = config.weights;
    return load_csv(config.input, options);
  }
  if (!config.benchmark.empty()) {
    if (config.n < 1) throw ConfigError("--n is required with --benchmark");
    const BenchmarkSuite suite = parse_benchmark(config.benchmark);
    return sample_suite(suite, config.n, config.base_seed, config.weights);
  }
  throw ConfigError("an --input CSV or a --benchmark tag is required");
}

SearchConfig search_config(const ExperimentConfig& config) {
  SearchConfig cfg;
  cfg.gamma = config.gamma;
  cfg.lambda = config.lambda;
  cfg.max_support_size = config.max_support;
  return cfg;
}

json fit_to_json(const FitResult& result, const SampleSizeDiagnostics& diag) {
  return json{{"beta", [&] {
                 json b = json::array();
                 for (Eigen::Index j = 0; j < result.beta.size(); ++j)
                   b.push_back(result.beta(j));
                 return b;
               }()},
              {"support", one_based(result.support)},
              {"objective",
               {{"risk", result.objective.risk},
                {"reg", result.objective.reg},
                {"penalty", result.objective.penalty},
                {"total", result.objective.total}}},
              {"gamma", result.gamma},
              {"lambda", result.lambda},
              {"diagnostics",
               {{"n_star", diag.n_star},
                {"n_bar", diag.n_bar},
                {"n_min", diag.n_min},
                {"n_dagger", diag.n_dagger},
                {"n_omega", diag.n_omega}}}};
}

void require_out_dir(const ExperimentConfig& config) {
  if (config.out_dir.empty()) throw ConfigError("--out DIR is required for this command");
  std::filesystem::create_directories(config.out_dir);
}

std::uint32_t support_mask(const std::vector<int>& support) {
  std::uint32_t mask = 0;
  for (int j : support) mask |= (1u << j);
  return mask;
}

struct EstimatorRun {
  std::string name;
  Eigen::VectorXd beta;
};

std::vector<std::string> normalize_estimators(std::vector<std::string> names) {
  if (names.empty()) names = {"eills", "pooled_ls", "ls_on_S*", "ls_on_Gc"};
  for (auto& name : names) {
    if (name == "ls_on_Sstar") name = "ls_on_S*";
    if (name != "eills" && name != "pooled_ls" && name != "ls_on_S*" && name != "ls_on_Gc") {
      throw ConfigError("unknown estimator '" + name +
                        "'; choose from eills, pooled_ls, ls_on_S*, ls_on_Gc");
    }
  }
  return names;
}

}  // namespace

BenchReport run_bench(const ExperimentConfig& config) {
  if (config.benchmark.empty()) throw ConfigError("bench requires --benchmark");
  if (config.n_grid.empty()) throw ConfigError("bench requires a nonempty --n-grid");
  if (config.replications < 1) throw ConfigError("--reps must be at least 1");
  const BenchmarkSuite suite = parse_benchmark(config.benchmark);
  const auto estimators = normalize_estimators(config.estimators);
  const Eigen::Index p = suite.beta_star.size();

  std::vector<int> full(p), g_complement;
  for (Eigen::Index j = 0; j < p; ++j) full[j] = static_cast<int>(j);
  for (int j : full) {
    if (std::find(suite.g_set.begin(), suite.g_set.end(), j) == suite.g_set.end()) {
      g_complement.push_back(j);
    }
  }

  BenchReport report;
  for (Eigen::Index n : config.n_grid) {
    if (n < 1) throw ConfigError("sample sizes must be positive");
    std::clog << "bench: n=" << n << " (" << config.replications << " replications, "
              << estimators.size() << " estimators)\n";
    const std::size_t reps = static_cast<std::size_t>(config.replications);
    // metric slots: [estimator][replication] -> (mse, |S^S*|, |S^G|)
    std::vector<std::vector<std::array<double, 3>>> metrics(
        estimators.size(), std::vector<std::array<double, 3>>(reps));
    std::exception_ptr failure;
    std::mutex failure_mutex;
    parallel_for(reps, [&](std::size_t r) {
      try {
        const MultiEnvDataset data =
            sample_suite(suite, n, config.base_seed + r, config.weights);
        const SufficientStats stats = compute_stats(data);
        for (std::size_t k = 0; k < estimators.size(); ++k) {
          Eigen::VectorXd beta;
          if (estimators[k] == "eills") {
            beta = l0_exhaustive(stats, data.weights, search_config(config)).beta;
          } else if (estimators[k] == "pooled_ls") {
            beta = pooled_ols(stats, data.weights, full);
          } else if (estimators[k] == "ls_on_S*") {
            beta = pooled_ols(stats, data.weights, suite.s_star);
          } else {
            beta = pooled_ols(stats, data.weights, g_complement);
          }
          double in_sstar = 0, in_g = 0;
          for (Eigen::Index j = 0; j < p; ++j) {
            if (beta(j) == 0.0) continue;
            if (std::find(suite.s_star.begin(), suite.s_star.end(), static_cast<int>(j)) !=
                suite.s_star.end()) {
              in_sstar += 1;
            }
            if (std::find(suite.g_set.begin(), suite.g_set.end(), static_cast<int>(j)) !=
                suite.g_set.end()) {
              in_g += 1;
            }
          }
          metrics[k][r] = {(beta - suite.beta_star).squaredNorm(), in_sstar, in_g};
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
    if (failure) std::rethrow_exception(failure);

    for (std::size_t k = 0; k < estimators.size(); ++k) {
      BenchCell cell;
      cell.estimator = estimators[k];
      cell.n = n;
      double mean[3] = {0, 0, 0};
      for (std::size_t r = 0; r < reps; ++r) {
        for (int q = 0; q < 3; ++q) mean[q] += metrics[k][r][q];
      }
      for (double& m : mean) m /= static_cast<double>(reps);
      double var[3] = {0, 0, 0};
      for (std::size_t r = 0; r < reps; ++r) {
        for (int q = 0; q < 3; ++q) {
          const double d = metrics[k][r][q] - mean[q];
          var[q] += d * d;
        }
      }
      const double denom = reps > 1 ? static_cast<double>(reps - 1) : 1.0;
      cell.mse_mean = mean[0];
      cell.sstar_mean = mean[1];
      cell.g_mean = mean[2];
      cell.mse_se = std::sqrt(var[0] / denom / static_cast<double>(reps));
      cell.sstar_se = std::sqrt(var[1] / denom / static_cast<double>(reps));
      cell.g_se = std::sqrt(var[2] / denom / static_cast<double>(reps));
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

int cmd_fit(const ExperimentConfig& config, std::ostream& out) {
  const MultiEnvDataset data = resolve_dataset(config);
  const SufficientStats stats = compute_stats(data);
  const FitResult result = l0_exhaustive(stats, data.weights, search_config(config));
  const json doc = fit_to_json(result, sample_size_diagnostics(data));
  out << doc.dump(2) << "\n";
  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
    std::ofstream file(config.out_dir / "fit.json");
    file << doc.dump(2) << "\n";
  }
  return 0;
}

int cmd_path(const ExperimentConfig& config, std::ostream& out) {
  if (config.gamma_grid.empty()) throw ConfigError("path requires --gamma-grid");
  const MultiEnvDataset data = resolve_dataset(config);
  const SufficientStats stats = compute_stats(data);
  SearchConfig cfg = search_config(config);
  const std::vector<FitResult> path = gamma_path(stats, data.weights, config.gamma_grid, cfg);

  std::string csv = "gamma";
  for (Eigen::Index j = 0; j < stats.p; ++j) csv += ",beta_" + std::to_string(j + 1);
  csv += ",support_mask\n";
  for (const auto& fit : path) {
    csv += fmt17(fit.gamma);
    for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
      csv += ',';
      csv += fmt17(fit.beta(j));
    }
    csv += ',' + std::to_string(support_mask(fit.support)) + '\n';
  }
  out << csv;
  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
    std::ofstream file(config.out_dir / "path.csv");
    file << csv;
  }
  return 0;
}

int cmd_bench(const ExperimentConfig& config, std::ostream& out) {
  require_out_dir(config);
  const BenchReport report = run_bench(config);

  std::string csv = "estimator,n,mse_mean,mse_se,sstar_mean,sstar_se,g_mean,g_se\n";
  for (const auto& cell : report.cells) {
    csv += cell.estimator + ',' + std::to_string(cell.n) + ',' + fmt17(cell.mse_mean) + ',' +
           fmt17(cell.mse_se) + ',' + fmt17(cell.sstar_mean) + ',' + fmt17(cell.sstar_se) +
           ',' + fmt17(cell.g_mean) + ',' + fmt17(cell.g_se) + '\n';
  }
  {
    std::ofstream file(config.out_dir / "bench.csv");
    if (!file) throw DataError("cannot write bench.csv");
    file << csv;
  }
  out << csv;

  // One error curve per estimator, matching the report rows.
  std::vector<std::string> names;
  for (const auto& cell : report.cells) {
    if (std::find(names.begin(), names.end(), cell.estimator) == names.end()) {
      names.push_back(cell.estimator);
    }
  }
  std::vector<Series> error_series;
  for (const auto& name : names) {
    Series s;
    s.name = name;
    for (const auto& cell : report.cells) {
      if (cell.estimator == name) {
        s.x.push_back(static_cast<double>(cell.n));
        s.y.push_back(cell.mse_mean);
      }
    }
    error_series.push_back(std::move(s));
  }
  AxesConfig err_axes;
  err_axes.title = "mean squared L2 error";
  err_axes.x_label = "n";
  err_axes.y_label = "||beta - beta*||^2";
  err_axes.log_y = true;
  emit_svg(error_series, err_axes, config.out_dir / "bench_l2.svg");

  if (std::find(names.begin(), names.end(), "eills") != names.end()) {
    Series in_sstar{"selected in S*", {}, {}}, in_g{"selected in G", {}, {}};
    for (const auto& cell : report.cells) {
      if (cell.estimator != "eills") continue;
      in_sstar.x.push_back(static_cast<double>(cell.n));
      in_sstar.y.push_back(cell.sstar_mean);
      in_g.x.push_back(static_cast<double>(cell.n));
      in_g.y.push_back(cell.g_mean);
    }
    AxesConfig sel_axes;
    sel_axes.title = "selected variables";
    sel_axes.x_label = "n";
    sel_axes.y_label = "count";
    emit_svg({in_sstar, in_g}, sel_axes, config.out_dir / "bench_selection.svg");
  }
  return 0;
}

int cmd_simulate(const ExperimentConfig& config, std::ostream& out) {
  if (config.benchmark.empty()) throw ConfigError("simulate requires --benchmark");
  if (config.n < 1) throw ConfigError("simulate requires --n");
  require_out_dir(config);
  const BenchmarkSuite suite = parse_benchmark(config.benchmark);
  const MultiEnvDataset data = sample_suite(suite, config.n, config.base_seed, config.weights);
  write_csv(data, config.out_dir / "data.csv");

  json truth{{"beta_star", vector_to_json(suite.beta_star)},
             {"S_star", one_based(suite.s_star)},
             {"G", one_based(suite.g_set)}};
  std::ofstream file(config.out_dir / "truth.json");
  if (!file) throw DataError("cannot write truth.json");
  file << truth.dump(2) << "\n";
  out << "wrote " << (config.out_dir / "data.csv").string() << " ("
      << data.total_n() << " rows) and truth.json\n";
  return 0;
}

int cmd_popdiag(const ExperimentConfig& config, std::ostream& out) {
  PopulationModel model;
  if (!config.input.empty()) {
    std::ifstream file(config.input);
    if (!file) throw DataError("cannot open '" + config.input + "'");
    json doc;
    try {
      file >> doc;
    } catch (const json::exception& e) {
      throw DataError(std::string("cannot parse spec JSON: ") + e.what());
    }
    LinearScmSpec spec;
    try {
      const auto b_rows = doc.at("B").get<std::vector<std::vector<double>>>();
      const auto alpha = doc.at("alpha").get<std::vector<double>>();
      const auto beta_star = doc.at("beta_star").get<std::vector<double>>();
      const auto d_diag = doc.at("D_diag").get<std::vector<double>>();
      spec.v0 = doc.at("v0").get<std::vector<double>>();
      const auto p = static_cast<Eigen::Index>(beta_star.size());
      spec.B.resize(p, p);
      if (static_cast<Eigen::Index>(b_rows.size()) != p) throw DataError("B must be p x p");
      for (Eigen::Index i = 0; i < p; ++i) {
        if (static_cast<Eigen::Index>(b_rows[i].size()) != p) {
          throw DataError("B must be p x p");
        }
        for (Eigen::Index j = 0; j < p; ++j) spec.B(i, j) = b_rows[i][j];
      }
      spec.alpha = Eigen::Map<const Eigen::VectorXd>(alpha.data(), alpha.size());
      spec.beta_star = Eigen::Map<const Eigen::VectorXd>(beta_star.data(), beta_star.size());
      spec.D_diag = Eigen::Map<const Eigen::VectorXd>(d_diag.data(), d_diag.size());
    } catch (const json::exception& e) {
      throw DataError(std::string("spec JSON is missing fields: ") + e.what());
    }
    model = population_moments(spec);
  } else if (!config.benchmark.empty()) {
    const BenchmarkSuite suite = parse_benchmark(config.benchmark);
    if (suite.name == "example1") {
      model = example1_population(suite.envs[0].s, suite.envs[1].s);
    } else if (suite.name == "example_a1") {
      const BenchmarkTag& t = suite.envs[0];
      model = example_a1_population(t.s, t.h, t.v1, t.v2, t.v0, suite.envs[1].v0);
    } else if (suite.name == "oracle_gaussian") {
      LinearScmSpec spec;
      const auto p = suite.beta_star.size();
      const double var = suite.envs[0].sigma * suite.envs[0].sigma;
      spec.B = Eigen::MatrixXd::Zero(p, p);
      spec.alpha = Eigen::VectorXd::Zero(p);
      spec.beta_star = suite.beta_star;
      spec.D_diag = Eigen::VectorXd::Constant(p, var);
      spec.v0 = {var};
      model = population_moments(spec);
    } else {
      throw ConfigError("benchmark '" + suite.name +
                        "' has no closed-form population model; its diagnostics are "
                        "Monte-Carlo only");
    }
  } else {
    throw ConfigError("popdiag requires --spec FILE or --benchmark TAG");
  }

  Eigen::VectorXd weights;
  if (!config.omega.empty()) {
    if (static_cast<Eigen::Index>(config.omega.size()) != model.n_envs()) {
      throw ConfigError("--omega must list one weight per environment");
    }
    weights = Eigen::Map<const Eigen::VectorXd>(config.omega.data(), config.omega.size());
    if ((weights.array() <= 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-12) {
      throw ConfigError("--omega entries must be positive and sum to 1");
    }
  } else {
    weights = Eigen::VectorXd::Constant(model.n_envs(),
                                        1.0 / static_cast<double>(model.n_envs()));
  }

  const PopulationSummary summary = summarize(model, weights);
  json doc{{"p", model.p()},
           {"envs", model.n_envs()},
           {"kappa_L", summary.kappa_lower},
           {"kappa_U", summary.kappa_upper},
           {"G", one_based(summary.spurious)},
           {"G_omega", one_based(summary.pooled_spurious)},
           {"pooled_limit", vector_to_json(summary.pooled_limit)},
           {"beta_star", vector_to_json(model.beta_star)}};
  if (std::isinf(summary.gamma_star)) {
    doc["gamma_star"] = "inf";
  } else {
    doc["gamma_star"] = summary.gamma_star;
    if (summary.pooled_spurious.empty()) doc["note"] = "no spurious supports";
  }
  doc["sigma"] = json::array();
  doc["bias"] = json::array();
  for (Eigen::Index e = 0; e < model.n_envs(); ++e) {
    doc["sigma"].push_back(matrix_to_json(model.sigma[e]));
    doc["bias"].push_back(vector_to_json(model.bias[e]));
  }
  if (model.p() <= 20) {
    json table = json::array();
    const int p = static_cast<int>(model.p());
    for (std::uint32_t mask = 1; mask < (1u << p); ++mask) {
      std::vector<int> support;
      for (int j = 0; j < p; ++j) {
        if (mask & (1u << j)) support.push_back(j);
      }
      const SupportDiagnostics diag = support_diagnostics(model, support, weights);
      json restricted = json::array();
      for (const auto& beta : diag.beta_restricted) restricted.push_back(vector_to_json(beta));
      table.push_back({{"S", one_based(support)},
                       {"b", diag.b},
                       {"b_bar", diag.b_bar},
                       {"d_bar", diag.d_bar},
                       {"v_star", diag.v_star},
                       {"xi", diag.xi},
                       {"beta_restricted", std::move(restricted)}});
    }
    doc["supports"] = std::move(table);
  }
  out << doc.dump(2) << "\n";
  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
    std::ofstream file(config.out_dir / "popdiag.json");
    file << doc.dump(2) << "\n";
  }
  return 0;
}

namespace {

std::vector<double> split_doubles(const std::string& text, const char* what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    try {
      std::size_t pos = 0;
      values.push_back(std::stod(token, &pos));
      if (pos != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw ConfigError(std::string("cannot parse '") + token + "' in " + what);
    }
  }
  if (values.empty()) throw ConfigError(std::string(what) + " is empty");
  return values;
}

void add_common_options(CLI::App* sub, ExperimentConfig& config, std::string& gamma_grid_text,
                        std::string& weights_text, std::string& estimators_text,
                        std::string& n_grid_text, std::string& omega_text) {
  sub->add_option("--input", config.input, "input CSV (env,y,x1,...,xp)");
  sub->add_option("--benchmark", config.benchmark,
                  "benchmark tag: fig2 | example1:s1,s2 | "
                  "example_a1:s,h,v1,v2,v0_1,v0_2 | oracle_gaussian:sigma,b1,...");
  sub->add_option("--gamma", config.gamma, "invariance regularizer strength");
  sub->add_option("--gamma-grid", gamma_grid_text, "ascending comma list of gamma values");
  sub->add_option("--lambda", config.lambda, "L0 penalty strength");
  sub->add_option("--weights", weights_text, "equal | proportional");
  sub->add_option("--n", config.n, "per-environment sample size");
  sub->add_option("--n-grid", n_grid_text, "comma list of per-environment sample sizes");
  sub->add_option("--reps", config.replications, "number of replications");
  sub->add_option("--seed", config.base_seed, "base RNG seed");
  sub->add_option("--out", config.out_dir, "output directory");
  sub->add_option("--max-support", config.max_support, "cap on enumerated support size");
  sub->add_flag("--center", config.center, "center covariates per environment");
  sub->add_option("--estimators", estimators_text,
                  "comma list from eills,pooled_ls,ls_on_S*,ls_on_Gc");
  sub->add_option("--spec", config.input, "LinearScmSpec JSON file (popdiag)");
  sub->add_option("--omega", omega_text, "explicit environment weights (popdiag)");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  ExperimentConfig config;
  std::string gamma_grid_text, weights_text, estimators_text, n_grid_text, omega_text;

  CLI::App app{"environment invariant linear least squares"};
  app.require_subcommand(1);
  const char* commands[] = {"fit", "path", "bench", "simulate", "popdiag"};
  const char* blurbs[] = {"fit one estimate from data",
                          "sweep the gamma regularization path",
                          "replication benchmark over sample sizes",
                          "generate benchmark data as CSV + ground-truth JSON",
                          "analytic population diagnostics for a linear SCM"};
  for (int i = 0; i < 5; ++i) {
    CLI::App* sub = app.add_subcommand(commands[i], blurbs[i]);
    add_common_options(sub, config, gamma_grid_text, weights_text, estimators_text,
                       n_grid_text, omega_text);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << json{{"error", e.what()}, {"type", "config"}}.dump() << "\n";
    return 2;
  }

  try {
    if (!gamma_grid_text.empty()) config.gamma_grid = split_doubles(gamma_grid_text, "--gamma-grid");
    if (!omega_text.empty()) config.omega = split_doubles(omega_text, "--omega");
    if (!n_grid_text.empty()) {
      for (double v : split_doubles(n_grid_text, "--n-grid")) {
        if (v < 1 || v != std::floor(v)) throw ConfigError("--n-grid entries must be positive integers");
        config.n_grid.push_back(static_cast<Eigen::Index>(v));
      }
    }
    if (!weights_text.empty()) {
      if (weights_text == "equal") {
        config.weights = WeightScheme::kEqual;
      } else if (weights_text == "proportional") {
        config.weights = WeightScheme::kProportional;
      } else {
        throw ConfigError("--weights must be 'equal' or 'proportional'");
      }
    }
    if (!estimators_text.empty()) {
      std::stringstream ss(estimators_text);
      std::string token;
      while (std::getline(ss, token, ',')) config.estimators.push_back(token);
    }
    if (config.gamma < 0.0) throw ConfigError("--gamma must be nonnegative");
    if (config.lambda < 0.0) throw ConfigError("--lambda must be nonnegative");

    const std::string command = app.get_subcommands().front()->get_name();
    if (command == "fit") return cmd_fit(config, out);
    if (command == "path") return cmd_path(config, out);
    if (command == "bench") return cmd_bench(config, out);
    if (command == "simulate") return cmd_simulate(config, out);
    return cmd_popdiag(config, out);
  } catch (const ConfigError& e) {
    err << json{{"error", e.what()}, {"type", "config"}}.dump() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << json{{"error", e.what()}, {"type", "data"}}.dump() << "\n";
    return 3;
  } catch (const SolverError& e) {
    err << json{{"error", e.what()}, {"type", "solver"}}.dump() << "\n";
    return 4;
  }
}

}  // namespace eills
