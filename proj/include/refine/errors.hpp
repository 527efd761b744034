#pragma once

#include <stdexcept>
#include <string>

namespace refine {

/// Precondition or shape violation in a call.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed file, unreadable path, or format/version mismatch.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf in a loss or gradient, divergence, or a degenerate numeric result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace refine
