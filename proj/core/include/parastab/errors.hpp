#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace parastab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An input violates a documented invariant. `key()` names the offending
/// field (or config key) so the CLI can report it.
class ValidationError : public Error {
 public:
  ValidationError(std::string key, const std::string& what)
      : Error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// a(x) fell below the ellipticity bound at a grid location.
class EllipticityError : public Error {
 public:
  EllipticityError(std::size_t node, double x, double value, double bound);
  std::size_t node() const noexcept { return node_; }
  double x() const noexcept { return x_; }

 private:
  std::size_t node_;
  double x_;
};

/// A requested time is not a node of the time grid.
class OffGridError : public Error {
 public:
  explicit OffGridError(double t);
  double time() const noexcept { return t_; }

 private:
  double t_;
};

/// The Crank-Nicolson step matrix had a vanishing pivot.
class SingularStepError : public Error {
 public:
  explicit SingularStepError(std::size_t step);
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// A Carleman weight was evaluated where l(t) = 0.
class EndpointError : public Error {
 public:
  explicit EndpointError(std::size_t time_index);
  std::size_t time_index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// The objective became non-finite during minimization.
class NonFiniteObjectiveError : public Error {
 public:
  NonFiniteObjectiveError(std::size_t iteration, std::string iterate_dump);
  std::size_t iteration() const noexcept { return iteration_; }
  const std::string& iterate_dump() const noexcept { return dump_; }

 private:
  std::size_t iteration_;
  std::string dump_;
};

}  // namespace parastab
