#pragma once

#include <stdexcept>
#include <string>

namespace lqfs {

// Exit codes used by the command-line tool. Each exception type carries one.
enum class ExitCode : int {
  ok = 0,
  input = 2,
  crp = 3,
  numeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Malformed or inconsistent input (bad JSON, failed validation, bad arguments).
class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what) : Error(what, ExitCode::input) {}
};

// The given tree is not the basic activity tree for these arrival rates.
class CrpViolation : public Error {
 public:
  explicit CrpViolation(const std::string& what) : Error(what, ExitCode::crp) {}
};

// Operation requested in the wrong load regime.
class RegimeError : public Error {
 public:
  explicit RegimeError(const std::string& what) : Error(what, ExitCode::input) {}
};

// Critical-load spectrum without exactly one eigenvalue at zero.
class DegenerateSpectrum : public Error {
 public:
  explicit DegenerateSpectrum(const std::string& what) : Error(what, ExitCode::numeric) {}
};

// Fluid integrator left the admissible state space.
class IntegratorAbort : public Error {
 public:
  explicit IntegratorAbort(const std::string& what) : Error(what, ExitCode::numeric) {}
};

}  // namespace lqfs
