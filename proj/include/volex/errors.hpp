#pragma once

#include <stdexcept>
#include <string>

namespace volex {

/// Shapes of inputs disagree (grid vs. path lengths, empty tables, ...).
class StructuralError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Parameter regime for which no closed form is implemented.
class UnsupportedRegime : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Numerical failure (non-convergent iteration, non-finite quadrature, ...).
class SolverError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed or incomplete configuration.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace volex
