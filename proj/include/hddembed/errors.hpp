#pragma once

#include <stdexcept>
#include <string>

namespace hddembed {

/// Invalid argument, shape mismatch or out-of-domain input.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Numerical integration did not reach the requested tolerance.
class QuadratureError : public std::runtime_error {
 public:
  QuadratureError(const std::string& what, double residual)
      : std::runtime_error(what + " (achieved residual " + std::to_string(residual) + ")"),
        residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Linear solve failed (singular or indefinite system).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be read, written or parsed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const char* msg) {
  if (!cond) throw DomainError(msg);
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw DomainError(msg);
}

}  // namespace detail
}  // namespace hddembed
