#pragma once

#include <stdexcept>
#include <string>

namespace sfmaxent {

// Argument outside the mathematical domain of an operation (x <= 0 etc).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A conservation rule that cannot be met by any (mu, lambda).
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(std::string rule, const std::string& what)
      : std::runtime_error(what), rule_(std::move(rule)) {}
  const std::string& rule() const noexcept { return rule_; }

 private:
  std::string rule_;
};

// Root finder or quadrature failed to reach tolerance.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed tabular input; carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sfmaxent
