#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sinkflow {

// Thrown when matrix/vector shapes disagree with what an operation needs.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when values are out of domain: NaN/Inf where finite numbers are
// required, negative masses, rows that should be distributions but are not.
struct InvalidInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown by readers when a file is syntactically malformed. The message
// carries the line or field that failed.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown for bad run configuration (unknown method name, missing field,
// inconsistent flags). The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a computation produces NaN/Inf mid-flight, e.g. a diverging
// training run. Carries enough context to point at the offending step.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. Deliberately minimal: the numeric
// kernels in this library are explicit loops, so the type only owns storage
// and shape. Most matrices here are square k x k transport plans; network
// weights are the rectangular exception.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), v_(static_cast<size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw DimensionError("Matrix: negative shape");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool is_square() const { return rows_ == cols_; }
  size_t size() const { return v_.size(); }

  double& operator()(int i, int j) { return v_[static_cast<size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return v_[static_cast<size_t>(i) * cols_ + j]; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::vector<double>& values() { return v_; }
  const std::vector<double>& values() const { return v_; }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> v_;
};

inline bool all_finite(const Matrix& m) {
  for (double x : m.values())
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// Frobenius distance ||A - B||_F. Used as the flow-cost metric and in tests.
inline double frobenius_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("frobenius_distance: shape mismatch " +
                         std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace sinkflow
