#pragma once

#include <stdexcept>
#include <string>

namespace designbench {

// Base of every error the library raises. The CLI maps subclasses onto exit codes.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Z'Z (or an arm sub-gram) is numerically rank deficient.
class singular_gram : public error {
 public:
  using error::error;
};

// 1 - P_ii is below tolerance, so the leave-one-out quantity is undefined.
class leverage_one : public error {
 public:
  using error::error;
};

// Arm sizes, treatment counts or other design constraints are violated.
class invalid_design : public error {
 public:
  using error::error;
};

// Enumeration would exceed the configured cap.
class too_large : public error {
 public:
  using error::error;
};

// Moment pattern not covered by the closed forms.
class unsupported : public error {
 public:
  using error::error;
};

// Worst-case error objective is identically zero (constant leverages).
class degenerate_objective : public error {
 public:
  using error::error;
};

class parse_error : public error {
 public:
  using error::error;
};

// Input data column is missing a value.
class missing_value : public parse_error {
 public:
  using parse_error::parse_error;
};

// Treatment column holds something other than 0 or 1.
class non_binary_treatment : public parse_error {
 public:
  using parse_error::parse_error;
};

class config_error : public error {
 public:
  using error::error;
};

}  // namespace designbench
