#include "eills/env_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eills/errors.hpp"

namespace eills {
namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

double parse_double(const std::string& token, std::size_t line_no, const char* column) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw DataError("line " + std::to_string(line_no) + ": cannot parse '" + token +
                    "' in column " + column);
  }
  if (!std::isfinite(value)) {
    throw DataError("line " + std::to_string(line_no) + ": non-finite value in column " +
                    column);
  }
  return value;
}

void format_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

Eigen::Index MultiEnvDataset::total_n() const {
  Eigen::Index total = 0;
  for (const auto& env : environments) total += env.n();
  return total;
}

void MultiEnvDataset::validate() const {
  if (environments.empty()) throw DataError("dataset has no environments");
  const Eigen::Index cols = environments.front().p();
  for (const auto& env : environments) {
    if (env.n() < 1) throw DataError("environment '" + env.env_id + "' is empty");
    if (env.p() != cols) {
      throw DataError("environment '" + env.env_id + "' has " + std::to_string(env.p()) +
                      " covariates, expected " + std::to_string(cols));
    }
    if (env.response.size() != env.n()) {
      throw DataError("environment '" + env.env_id + "' response length mismatch");
    }
    if (!env.design.allFinite() || !env.response.allFinite()) {
      throw DataError("environment '" + env.env_id + "' contains non-finite values");
    }
  }
  if (weights.size() != n_envs()) throw DataError("weight vector length mismatch");
  if ((weights.array() <= 0.0).any()) throw DataError("weights must be positive");
  if (std::abs(weights.sum() - 1.0) > 1e-12) throw DataError("weights must sum to 1");
}

MultiEnvDataset load_csv(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return load_csv(in, options);
}

MultiEnvDataset load_csv(std::istream& in, const LoadOptions& options) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty input: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split_fields(line);
  if (header.size() < 3 || header[0] != "env" || header[1] != "y") {
    throw DataError("header must be env,y,x1,...,xp");
  }
  const std::size_t p = header.size() - 2;
  for (std::size_t j = 0; j < p; ++j) {
    if (header[j + 2] != "x" + std::to_string(j + 1)) {
      throw DataError("header must be env,y,x1,...,xp; got column '" + header[j + 2] + "'");
    }
  }

  struct Buffer {
    std::vector<double> ys;
    std::vector<double> xs;  // row-major
  };
  std::vector<std::string> order;
  std::map<std::string, Buffer> buffers;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != p + 2) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(p + 2) + " fields, got " + std::to_string(fields.size()));
    }
    const std::string& env = fields[0];
    if (env.empty()) throw DataError("line " + std::to_string(line_no) + ": empty env token");
    auto it = buffers.find(env);
    if (it == buffers.end()) {
      order.push_back(env);
      it = buffers.emplace(env, Buffer{}).first;
    }
    it->second.ys.push_back(parse_double(fields[1], line_no, "y"));
    for (std::size_t j = 0; j < p; ++j) {
      it->second.xs.push_back(parse_double(fields[j + 2], line_no, header[j + 2].c_str()));
    }
  }
  if (order.empty()) throw DataError("no data rows");

  MultiEnvDataset dataset;
  for (const auto& env : order) {
    const Buffer& buf = buffers[env];
    const Eigen::Index n = static_cast<Eigen::Index>(buf.ys.size());
    EnvironmentSample sample;
    sample.env_id = env;
    sample.response = Eigen::Map<const Eigen::VectorXd>(buf.ys.data(), n);
    sample.design =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            buf.xs.data(), n, static_cast<Eigen::Index>(p));
    if (options.center) {
      const Eigen::RowVectorXd means = sample.design.colwise().mean();
      sample.design.rowwise() -= means;
    }
    dataset.environments.push_back(std::move(sample));
  }
  dataset.weights = make_weights(dataset, options.weights);
  dataset.validate();
  return dataset;
}

void write_csv(const MultiEnvDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  write_csv(dataset, out);
}

void write_csv(const MultiEnvDataset& dataset, std::ostream& out) {
  dataset.validate();
  std::string line = "env,y";
  for (Eigen::Index j = 0; j < dataset.p(); ++j) line += ",x" + std::to_string(j + 1);
  line += "\n";
  out << line;
  for (const auto& env : dataset.environments) {
    for (Eigen::Index i = 0; i < env.n(); ++i) {
      line = env.env_id;
      line += ',';
      format_double(line, env.response(i));
      for (Eigen::Index j = 0; j < env.p(); ++j) {
        line += ',';
        format_double(line, env.design(i, j));
      }
      line += '\n';
      out << line;
    }
  }
}

Eigen::VectorXd make_weights(const MultiEnvDataset& dataset, WeightScheme scheme) {
  const Eigen::Index m = dataset.n_envs();
  if (m == 0) throw DataError("dataset has no environments");
  Eigen::VectorXd w(m);
  if (scheme == WeightScheme::kEqual) {
    w.setConstant(1.0 / static_cast<double>(m));
  } else {
    double total = static_cast<double>(dataset.total_n());
    for (Eigen::Index e = 0; e < m; ++e) {
      w(e) = static_cast<double>(dataset.environments[e].n()) / total;
    }
  }
  return w;
}

void SufficientStats::validate() const {
  for (const auto& env : envs) {
    if (env.gram.rows() != p || env.gram.cols() != p || env.xty.size() != p) {
      throw DataError("stats dimension mismatch");
    }
    if ((env.gram - env.gram.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw DataError("gram matrix is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(env.gram,
                                                       Eigen::EigenvaluesOnly);
    const double largest = std::max(eig.eigenvalues().maxCoeff(), 0.0);
    if (eig.eigenvalues().minCoeff() < -1e-10 * largest) {
      throw DataError("gram matrix is not positive semidefinite");
    }
    if (env.yty < 0.0) throw DataError("negative response second moment");
  }
}

SufficientStats compute_stats(const MultiEnvDataset& dataset,
                              const std::vector<FeatureTag>& features) {
  dataset.validate();
  SufficientStats stats;
  stats.p = dataset.p();
  stats.envs.reserve(dataset.environments.size());
  for (const auto& env : dataset.environments) {
    const double inv_n = 1.0 / static_cast<double>(env.n());
    EnvStats s;
    Eigen::MatrixXd gram = inv_n * (env.design.transpose() * env.design);
    s.gram = 0.5 * (gram + gram.transpose());  // enforce exact symmetry
    s.xty = inv_n * (env.design.transpose() * env.response);
    s.yty = inv_n * env.response.squaredNorm();
    s.n = env.n();
    for (FeatureTag tag : features) {
      Eigen::MatrixXd h;
      if (tag == FeatureTag::kSquare) {
        h = env.design.array().square();
      } else {
        h = env.design.array().cos();
      }
      FeatureMoments fm;
      fm.hxy = inv_n * (h.transpose() * env.response);
      fm.hxx = inv_n * (h.transpose() * env.design);
      s.features.emplace(tag, std::move(fm));
    }
    stats.envs.push_back(std::move(s));
  }
  stats.validate();
  return stats;
}

SampleSizeDiagnostics sample_size_diagnostics(const MultiEnvDataset& dataset) {
  dataset.validate();
  SampleSizeDiagnostics d;
  d.n_star = std::numeric_limits<double>::infinity();
  d.n_min = std::numeric_limits<double>::infinity();
  double inv_bar = 0.0, inv_dagger = 0.0, inv_omega = 0.0;
  for (Eigen::Index e = 0; e < dataset.n_envs(); ++e) {
    const double n = static_cast<double>(dataset.environments[e].n());
    const double w = dataset.weights(e);
    d.n_star = std::min(d.n_star, n / w);
    d.n_min = std::min(d.n_min, n);
    inv_bar += w / n;
    inv_dagger += w / (n * std::sqrt(n));
    inv_omega += w * w / n;
  }
  d.n_bar = 1.0 / inv_bar;
  d.n_dagger = 1.0 / inv_dagger;
  d.n_omega = 1.0 / inv_omega;
  return d;
}

std::string stats_to_json(const SufficientStats& stats) {
  nlohmann::json envs = nlohmann::json::array();
  for (const auto& env : stats.envs) {
    nlohmann::json gram = nlohmann::json::array();
    for (Eigen::Index i = 0; i < env.gram.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < env.gram.cols(); ++j) row.push_back(env.gram(i, j));
      gram.push_back(std::move(row));
    }
    nlohmann::json xty = nlohmann::json::array();
    for (Eigen::Index j = 0; j < env.xty.size(); ++j) xty.push_back(env.xty(j));
    envs.push_back({{"gram", std::move(gram)},
                    {"xty", std::move(xty)},
                    {"yty", env.yty},
                    {"n", env.n}});
  }
  return nlohmann::json{{"environments", std::move(envs)}}.dump(2);
}

}  // namespace eills
