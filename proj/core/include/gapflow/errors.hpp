#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gapflow {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateChart : Error {
  using Error::Error;
};

struct MissingBoundaryData : Error {
  using Error::Error;
};

struct VariantMismatch : Error {
  using Error::Error;
};

struct Xi3OutOfRange : Error {
  using Error::Error;
};

struct SingularOperator : Error {
  using Error::Error;
};

struct IncompatibleTargets : Error {
  using Error::Error;
};

struct InsufficientPoints : Error {
  using Error::Error;
};

struct UnknownRegistryName : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct SchemaError : Error {
  SchemaError(int line, std::string key, const std::string& what)
      : Error("schema error (line " + std::to_string(line) + ", key '" + key + "'): " + what),
        line(line),
        key(std::move(key)) {}
  int line;
  std::string key;
};

struct NonConvergence : Error {
  NonConvergence(const std::string& what, int iterations, std::vector<double> history)
      : Error(what), iterations(iterations), history(std::move(history)) {}
  int iterations;
  std::vector<double> history;
};

}  // namespace gapflow
