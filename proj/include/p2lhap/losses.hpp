#pragma once

#include <span>
#include <vector>

#include "p2lhap/tape.hpp"

namespace p2lhap {

/// Probabilities are clamped from below at this value before taking logs.
inline constexpr double kProbFloor = 1e-8;
inline constexpr double kDefaultSmoothingThreshold = 2.0;

struct LossReport {
  double l_cls = 0.0;
  double l_seg = 0.0;
  double l_pre = 0.0;
  double l_total = 0.0;
};

LossReport total_loss(double l_cls, double l_seg, double l_pre);

/// Mean over rows of -w[y] * log p[y] for probs[..., C] and one target per row.
/// Empty class_weights means unweighted.
template <typename T>
Var<T> cross_entropy(Var<T> probs, std::span<const int> targets, std::span<const double> class_weights = {});

/// Same functional over future-patch probabilities [B, T_p, C].
template <typename T>
Var<T> forecast_loss(Var<T> probs, std::span<const int> targets, std::span<const double> class_weights = {}) {
  return cross_entropy(probs, targets, class_weights);
}

/// Truncated MSE over consecutive log-probabilities of probs[B, N, C]:
/// mean of min(|log p[t] - log ref[t-1]|, tau)^2 over all B*(N-1)*C terms.
/// `reference` is a constant copy of the probabilities (no gradient through
/// the t-1 term). Returns 0 and sets *degenerate when N < 2.
template <typename T>
Var<T> tmse_smoothing(Var<T> probs, const BasicTensor<T>& reference, double tau = kDefaultSmoothingThreshold,
                      bool* degenerate = nullptr);

template <typename T>
Var<T> tmse_smoothing(Var<T> probs, double tau = kDefaultSmoothingThreshold, bool* degenerate = nullptr) {
  const BasicTensor<T> reference = probs.value();
  return tmse_smoothing(probs, reference, tau, degenerate);
}

/// Mean squared error against a constant target.
template <typename T>
Var<T> mse_loss(Var<T> pred, const BasicTensor<T>& target);

/// w_c = (1 - beta) / (1 - beta^n_c), rescaled to sum to C. Absent classes get 0.
std::vector<double> effective_number_weights(std::span<const int> labels, std::size_t classes, double beta = 0.999);

}  // namespace p2lhap
