#ifndef LCA_ERRORS_HPP
#define LCA_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lca {

/// Malformed or out-of-contract input data (bad shapes, NaN, too few points).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine could not produce a meaningful result, e.g. a
/// covariance that is singular or not positive definite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cholesky factorization hit a non-positive pivot.
class NotPositiveDefinite : public NumericalError {
 public:
  NotPositiveDefinite(const std::string& what, long pivot)
      : NumericalError(what), pivot_(pivot) {}

  /// Zero-based index of the failing pivot.
  long pivot() const noexcept { return pivot_; }

 private:
  long pivot_;
};

}  // namespace lca

#endif  // LCA_ERRORS_HPP
