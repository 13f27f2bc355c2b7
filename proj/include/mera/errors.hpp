#pragma once

#include <stdexcept>
#include <string>

namespace mera {

/// Coarse failure classes. The CLI maps these onto process exit codes.
enum class ErrorClass {
  Usage = 1,      // bad flags, bad configuration
  Data = 2,       // malformed files, dimension or manifest problems
  Numerical = 3,  // non-finite values, training failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }
  int exit_code() const noexcept { return static_cast<int>(cls_); }

 private:
  ErrorClass cls_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ErrorClass::Data, "dimension error: " + w) {}
};

struct ParameterError : Error {
  explicit ParameterError(const std::string& w) : Error(ErrorClass::Usage, "parameter error: " + w) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorClass::Usage, "configuration error: " + w) {}
};

struct LookupError : Error {
  explicit LookupError(const std::string& w) : Error(ErrorClass::Data, "lookup error: " + w) {}
};

struct EmptyInputError : Error {
  explicit EmptyInputError(const std::string& w) : Error(ErrorClass::Data, "empty input: " + w) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(ErrorClass::Data, "format error: " + w) {}
};

struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorClass::Data, "i/o error: " + w) {}
};

/// Store construction and retrieval failures.
struct StoreError : Error {
  explicit StoreError(const std::string& w) : Error(ErrorClass::Data, w) {}
};

struct MetricError : Error {
  explicit MetricError(const std::string& w) : Error(ErrorClass::Data, "undefined metric: " + w) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& w) : Error(ErrorClass::Numerical, w) {}
};

struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error(ErrorClass::Numerical, "contract violation: " + w) {}
};

}  // namespace mera
