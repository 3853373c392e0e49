#pragma once

#include <cmath>

#include <Eigen/Core>

// Small numeric kernels shared by the transformer and the classifiers.
// Reductions are written as explicit left-to-right loops so results do not
// depend on vectorization or data alignment.
namespace fasb::math {

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar dot(const Eigen::MatrixBase<DerivedA>& a,
                              const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  Scalar sum = Scalar(0);
  for (Eigen::Index i = 0; i < a.size(); ++i) sum += a(i) * b(i);
  return sum;
}

template <typename Derived>
typename Derived::Scalar sum(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  Scalar total = Scalar(0);
  for (Eigen::Index i = 0; i < v.size(); ++i) total += v(i);
  return total;
}

template <typename Derived>
typename Derived::Scalar norm(const Eigen::MatrixBase<Derived>& v) {
  return std::sqrt(dot(v, v));
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

// out = gain * (x - mean) / sqrt(var + eps) + bias, population variance.
template <typename DerivedX, typename DerivedG, typename DerivedB>
Eigen::Matrix<typename DerivedX::Scalar, Eigen::Dynamic, 1> layer_norm(
    const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedG>& gain,
    const Eigen::MatrixBase<DerivedB>& bias, typename DerivedX::Scalar eps) {
  using Scalar = typename DerivedX::Scalar;
  const Scalar n = static_cast<Scalar>(x.size());
  const Scalar mean = sum(x) / n;
  Scalar var = Scalar(0);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Scalar d = x(i) - mean;
    var += d * d;
  }
  var /= n;
  const Scalar inv_std = Scalar(1) / std::sqrt(var + eps);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out(i) = (x(i) - mean) * inv_std * gain(i) + bias(i);
  }
  return out;
}

template <typename Scalar>
Scalar gelu(Scalar x) {
  constexpr Scalar k = Scalar(0.7978845608028654);  // sqrt(2 / pi)
  return Scalar(0.5) * x * (Scalar(1) + std::tanh(k * (x + Scalar(0.044715) * x * x * x)));
}

// y = W x with W row-major [out, in]; each output is a left-to-right dot.
template <typename DerivedW, typename DerivedX>
Eigen::Matrix<typename DerivedW::Scalar, Eigen::Dynamic, 1> matvec(
    const Eigen::MatrixBase<DerivedW>& w, const Eigen::MatrixBase<DerivedX>& x) {
  Eigen::Matrix<typename DerivedW::Scalar, Eigen::Dynamic, 1> y(w.rows());
  for (Eigen::Index r = 0; r < w.rows(); ++r) y(r) = dot(w.row(r).transpose(), x);
  return y;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Scalar max = logits(0);
  for (Eigen::Index i = 1; i < logits.size(); ++i) max = std::max(max, logits(i));
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(logits.size());
  Scalar total = Scalar(0);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    out(i) = std::exp(logits(i) - max);
    total += out(i);
  }
  for (Eigen::Index i = 0; i < logits.size(); ++i) out(i) /= total;
  return out;
}

// log softmax(logits)[index], evaluated in double.
template <typename Derived>
double log_softmax_at(const Eigen::MatrixBase<Derived>& logits, Eigen::Index index) {
  double max = static_cast<double>(logits(0));
  for (Eigen::Index i = 1; i < logits.size(); ++i) max = std::max(max, static_cast<double>(logits(i)));
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) total += std::exp(static_cast<double>(logits(i)) - max);
  return static_cast<double>(logits(index)) - max - std::log(total);
}

}  // namespace fasb::math
