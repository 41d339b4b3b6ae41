#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dsa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DSA_DEFINE_ERROR(Name)                \
  class Name : public Error {                 \
   public:                                    \
    using Error::Error;                       \
  }

DSA_DEFINE_ERROR(ConnectivityError);
DSA_DEFINE_ERROR(ValidationError);
DSA_DEFINE_ERROR(DimensionError);
DSA_DEFINE_ERROR(ErgodicityError);
DSA_DEFINE_ERROR(StateError);
DSA_DEFINE_ERROR(CapacityError);
DSA_DEFINE_ERROR(RankError);
DSA_DEFINE_ERROR(ConfigError);
DSA_DEFINE_ERROR(IncompleteConstantsError);
DSA_DEFINE_ERROR(FitError);
DSA_DEFINE_ERROR(ReportError);

#undef DSA_DEFINE_ERROR

/// Raised when an iterate becomes non-finite or exceeds the divergence guard.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long last_valid_t)
      : Error(what), last_valid_t_(last_valid_t) {}
  long last_valid_t() const { return last_valid_t_; }

 private:
  long last_valid_t_;
};

/// Kahan–Neumaier accumulator.
template <typename Scalar = double>
class CompensatedSum {
 public:
  void add(Scalar x) {
    const Scalar t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  CompensatedSum& operator+=(Scalar x) {
    add(x);
    return *this;
  }
  Scalar value() const { return sum_ + comp_; }

 private:
  Scalar sum_ = 0;
  Scalar comp_ = 0;
};

/// Largest singular value of a dense matrix (0 for empty input).
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0;
  Eigen::JacobiSVD<Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>> svd(m);
  return svd.singularValues()(0);
}

}  // namespace dsa
