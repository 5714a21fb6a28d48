#pragma once

#include <stdexcept>
#include <string>

namespace msea {

/// Shape or length disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A distribution could not be formed (every position masked, mass not 1, ...).
class DistributionError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A NaN or Inf reached a place that requires finite values.
class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unusable input data (records, datasets, vocabularies).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint or file format problems: bad magic, version mismatch, truncation.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace msea
