#pragma once

#include <cstddef>
#include <vector>

#include "p2lhap/tape.hpp"

namespace p2lhap {

// Differentiable primitives. Each records one node on the operands' tape.
// Instantiated for float and double.

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
/// b's shape must be a suffix of a's shape (bias rows, positional tables).
template <typename T>
Var<T> add_broadcast(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, double s);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
/// Elementwise product with a non-differentiable tensor (dropout masks).
template <typename T>
Var<T> mul_constant(Var<T> a, const BasicTensor<T>& c);

/// a[..., k] · b[k, n] -> [..., n]
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
/// a[..., k] · b[n, k]^T -> [..., n]
template <typename T>
Var<T> matmul_bt(Var<T> a, Var<T> b);
/// Batched a[B, m, k] · b[B, k, n] -> [B, m, n]
template <typename T>
Var<T> bmm(Var<T> a, Var<T> b);
/// Batched a[B, m, k] · b[B, n, k]^T -> [B, m, n]
template <typename T>
Var<T> bmm_bt(Var<T> a, Var<T> b);

template <typename T>
Var<T> transpose(Var<T> a);
template <typename T>
Var<T> permute(Var<T> a, const std::vector<std::size_t>& axes);
template <typename T>
Var<T> reshape(Var<T> a, Shape shape);
/// Elements [start, start + length) along `axis`.
template <typename T>
Var<T> slice(Var<T> a, std::size_t axis, std::size_t start, std::size_t length);

/// Max-subtracted softmax along `axis`.
template <typename T>
Var<T> softmax(Var<T> a, std::size_t axis);
template <typename T>
Var<T> relu(Var<T> a);
/// Exact (erf) GELU.
template <typename T>
Var<T> gelu(Var<T> a);

template <typename T>
Var<T> sum(Var<T> a);
template <typename T>
Var<T> mean(Var<T> a);

enum class NormMode {
  kTrain,        ///< batch statistics, running statistics updated
  kTrainFrozen,  ///< batch statistics, running statistics untouched
  kEval,         ///< running statistics
};

template <typename T>
struct BatchNormStats {
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;

  static BatchNormStats identity(std::size_t features) {
    return {BasicTensor<T>({features}, T{0}), BasicTensor<T>({features}, T{1})};
  }
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Normalizes every position of x per index of `axis` (the feature axis),
/// then applies gamma/beta. The running variance is tracked unbiased.
template <typename T>
Var<T> batchnorm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormStats<T>& stats, NormMode mode,
                 std::size_t axis);

}  // namespace p2lhap
