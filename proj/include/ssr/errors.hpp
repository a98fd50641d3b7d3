#pragma once

#include <stdexcept>
#include <string>

namespace ssr {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid model / world / training configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside its domain (e.g. command code out of range).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Index or horizon outside the valid range.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// API misuse: non-scalar loss, inactive tape, etc.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed dataset / checkpoint on disk.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ssr
