#pragma once

#include <stdexcept>
#include <string>

namespace resem {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid argument or malformed input (bad dimensions, out-of-range
// probabilities, schema mismatches, ...).  Maps to CLI exit code 2.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(what) {}
};

// A covariate covariance matrix is singular or too ill-conditioned for the
// configured condition-number cap.  Carries the name of the offending block.
class SingularDesignError : public DomainError {
 public:
  SingularDesignError(const std::string& block, const std::string& detail)
      : DomainError("singular design in block '" + block + "': " + detail),
        block_(block) {}
  const std::string& block() const { return block_; }

 private:
  std::string block_;
};

// Degenerate population or estimate (e.g. V <= 0).
class DegenerateError : public DomainError {
 public:
  explicit DegenerateError(const std::string& what) : DomainError(what) {}
};

// A rejection loop exceeded its attempt budget.  Maps to CLI exit code 3.
class StarvationError : public Error {
 public:
  StarvationError(const std::string& stage, long attempts, long accepted)
      : Error("acceptance starvation in " + stage + " stage: " +
              std::to_string(accepted) + " accepted in " +
              std::to_string(attempts) + " attempts (empirical acceptance rate " +
              std::to_string(static_cast<double>(accepted) /
                             static_cast<double>(attempts)) + ")"),
        stage_(stage),
        attempts_(attempts),
        accepted_(accepted) {}
  const std::string& stage() const { return stage_; }
  long attempts() const { return attempts_; }
  long accepted() const { return accepted_; }

 private:
  std::string stage_;
  long attempts_;
  long accepted_;
};

}  // namespace resem
