#pragma once

#include <stdexcept>
#include <string>

namespace addeq {

/// A configured resource cap (memory, enumeration size, modulus table) was hit.
/// The CLI maps this to exit code 2.
class GuardError : public std::runtime_error {
 public:
  GuardError(std::string guard, std::string detail)
      : std::runtime_error(guard + ": " + detail), guard_(std::move(guard)) {}
  const std::string& guard() const noexcept { return guard_; }

 private:
  std::string guard_;
};

/// An internal consistency check failed. This is a defect, never an expected path.
/// The CLI maps this to exit code 3.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Adaptive quadrature did not reach the requested tolerance.
class QuadratureError : public std::runtime_error {
 public:
  QuadratureError(const std::string& what, double estimate, double error)
      : std::runtime_error(what), estimate_(estimate), error_(error) {}
  double estimate() const noexcept { return estimate_; }
  double error() const noexcept { return error_; }

 private:
  double estimate_;
  double error_;
};

}  // namespace addeq
