#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "p2lhap/ops.hpp"

namespace p2lhap {

/// Builds a scalar from leaf variables on the given tape.
using ScalarFn = std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>;

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-4;
  /// Multiplies the tape gradient before comparison. Anything other than 1
  /// deliberately breaks the check; used as a negative control.
  double analytic_scale = 1.0;
  /// Lower bound on the error denominator, so a gradient that is exactly zero
  /// (a bias feeding batch-statistics normalization) is judged by absolute FD noise.
  double norm_floor = 1e-4;
};

struct GradCheckEntry {
  std::string name;
  std::size_t elements = 0;
  /// ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2, norm_floor)
  double rel_error = 0.0;
  bool passed = false;
};

/// Compares tape gradients of `fn` with central finite differences for every
/// element of every input.
std::vector<GradCheckEntry> check_gradients(const ScalarFn& fn, const std::vector<TensorD>& inputs,
                                            const std::vector<std::string>& names,
                                            const GradCheckOptions& options = {});

double norm_relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor = 0.0);

/// sum(a * w) with w held constant. Reduces a tensor output to a scalar probe.
template <typename T>
Var<T> weighted_sum(Var<T> a, const BasicTensor<T>& w) {
  return sum(mul_constant(a, w));
}

/// Uniform random values in [lo, hi) from `seed`.
TensorD random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0);

}  // namespace p2lhap
