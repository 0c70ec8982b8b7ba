#pragma once

#include <stdexcept>
#include <string>

namespace eills {

/// Invalid configuration: bad hyper-parameters, grids, estimator names.
/// Mapped to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid or malformed data: parse failures, schema violations, non-finite
/// values, dimension mismatches. Mapped to CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure inside the search, e.g. a singular restricted system
/// under the `reject` policy. Mapped to CLI exit code 4.
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace eills
