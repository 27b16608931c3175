#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace wordrec {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// log(exp(a) + exp(b)) without overflow; -inf is the additive identity.
template <typename Scalar>
Scalar log_add(Scalar a, Scalar b) {
  if (a == -std::numeric_limits<Scalar>::infinity()) return b;
  if (b == -std::numeric_limits<Scalar>::infinity()) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.size() == 0) return -std::numeric_limits<Scalar>::infinity();
  const Scalar m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.derived().array() - m).exp().sum());
}

/// Shannon entropy in bits with 0 log 0 = 0.
template <typename Derived>
typename Derived::Scalar entropy_bits(const Eigen::DenseBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  Scalar h = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const Scalar v = p.derived().coeff(i);
    if (v > 0) h -= v * std::log2(v);
  }
  return h < 0 ? Scalar(0) : h;
}

/// Exponentiate and normalize a vector of log weights. Returns an empty
/// vector when every weight is -inf.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::DenseBase<Derived>& logw) {
  using Scalar = typename Derived::Scalar;
  const Scalar z = log_sum_exp(logw);
  if (!std::isfinite(z)) return {};
  return (logw.derived().array() - z).exp().matrix();
}

}  // namespace wordrec
