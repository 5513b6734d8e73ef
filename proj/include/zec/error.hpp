#pragma once

#include <stdexcept>
#include <string>

namespace zec {

/// Base for every error raised by the library. `exit_code()` maps the error
/// onto the CLI exit-code contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Malformed channel document or invariant violation in a model.
class InputError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// A configurable size guard would be exceeded.
class GuardExceeded : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// A precondition of the capacity or control guarantees fails (zero capacity, negative margin).
class Refusal : public Error {
 public:
  Refusal(const std::string& what, double margin) : Error(what), margin_(margin) {}
  int exit_code() const noexcept override { return 4; }
  double margin() const noexcept { return margin_; }

 private:
  double margin_;
};

/// An internal contract was broken; indicates a bug, never user error.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace zec
