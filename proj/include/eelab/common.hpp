#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace eelab {

using Complex = std::complex<double>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Vector<double>;
using VectorXc = Vector<Complex>;
using MatrixXd = Matrix<double>;
using MatrixXc = Matrix<Complex>;

/// Base of every error raised by the library. `kind()` is a short stable tag
/// that the CLI prints and tests match on.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& w) : Error("invalid-argument", w) {}
};
struct DivergenceError : Error {
  explicit DivergenceError(const std::string& w) : Error("divergence", w) {}
};
struct InsufficientData : Error {
  explicit InsufficientData(const std::string& w) : Error("insufficient-data", w) {}
};
struct IllConditioned : Error {
  explicit IllConditioned(const std::string& w) : Error("ill-conditioned", w) {}
};
struct BasisDegeneracy : Error {
  explicit BasisDegeneracy(const std::string& w) : Error("basis-degeneracy", w) {}
};
struct OverflowError : Error {
  explicit OverflowError(const std::string& w) : Error("overflow", w) {}
};
struct DegenerateDistribution : Error {
  explicit DegenerateDistribution(const std::string& w)
      : Error("degenerate-distribution", w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error("format", w) {}
};
struct TrainingError : Error {
  explicit TrainingError(const std::string& w) : Error("training", w) {}
};

struct UndefinedMetric : Error {
  explicit UndefinedMetric(const std::string& w) : Error("undefined-metric", w) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

}  // namespace eelab
