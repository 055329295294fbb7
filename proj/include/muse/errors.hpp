#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace muse {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A model produced a non-finite value or was given invalid input.
class ModelError : public Error {
 public:
  explicit ModelError(const std::string& msg) : Error(msg) {}
};

/// Dense linear solve hit a pivot below the singularity threshold.
class SingularMatrixError : public Error {
 public:
  SingularMatrixError(const std::string& msg, double pivot_ratio)
      : Error(msg), pivot_ratio(pivot_ratio) {}
  double pivot_ratio;  // |smallest pivot| / max|A|
};

/// Conjugate gradient observed p'Ap <= 0: the operator is not positive
/// definite, i.e. the MAP point is not a proper maximum. Carries the
/// offending direction so callers can escape a saddle along it.
class NegativeCurvatureError : public Error {
 public:
  explicit NegativeCurvatureError(const std::string& msg,
                                  Eigen::VectorXd direction = {})
      : Error(msg), direction(std::move(direction)) {}
  Eigen::VectorXd direction;
};

/// An iterative procedure failed to converge and recovery was not possible.
class ConvergenceError : public Error {
 public:
  explicit ConvergenceError(const std::string& msg) : Error(msg) {}
};

}  // namespace muse
