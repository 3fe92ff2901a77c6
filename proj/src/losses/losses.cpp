#include "p2lhap/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace p2lhap {

LossReport total_loss(double l_cls, double l_seg, double l_pre) {
  return LossReport{l_cls, l_seg, l_pre, l_cls + l_seg + l_pre};
}

template <typename T>
Var<T> cross_entropy(Var<T> probs, std::span<const int> targets, std::span<const double> class_weights) {
  const auto& p = probs.value();
  if (p.rank() == 0) throw DimensionError("cross_entropy: probabilities must have a class axis");
  const std::size_t c = p.dim(p.rank() - 1);
  const std::size_t rows = p.size() / c;
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows of " + shape_string(p.shape()));
  }
  if (!class_weights.empty() && class_weights.size() != c) {
    throw DimensionError("cross_entropy: " + std::to_string(class_weights.size()) + " class weights for " +
                         std::to_string(c) + " classes");
  }
  std::vector<std::size_t> index(rows);
  std::vector<double> weight(rows, 1.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int y = targets[r];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw std::invalid_argument("cross_entropy: target " + std::to_string(y) + " outside [0, " +
                                  std::to_string(c) + ")");
    }
    index[r] = r * c + static_cast<std::size_t>(y);
    if (!class_weights.empty()) weight[r] = class_weights[static_cast<std::size_t>(y)];
    total -= weight[r] * std::log(std::max(static_cast<double>(p[index[r]]), kProbFloor));
  }
  const double n = static_cast<double>(rows);
  return probs.tape().record(
      "cross_entropy", BasicTensor<T>::scalar(static_cast<T>(total / n)), {probs},
      [probs, index = std::move(index), weight = std::move(weight), n](Tape<T>& t, const BasicTensor<T>& g) {
        auto* gp = t.grad_slot(probs);
        const auto& p = probs.value();
        for (std::size_t r = 0; r < index.size(); ++r) {
          const double v = p[index[r]];
          if (v < kProbFloor) continue;
          (*gp)[index[r]] += static_cast<T>(-static_cast<double>(g[0]) * weight[r] / (n * v));
        }
      });
}

template <typename T>
Var<T> tmse_smoothing(Var<T> probs, const BasicTensor<T>& reference, double tau, bool* degenerate) {
  const auto& p = probs.value();
  if (p.rank() != 3) throw DimensionError("tmse_smoothing: expected [B, N, C], got " + shape_string(p.shape()));
  if (reference.shape() != p.shape()) {
    throw DimensionError("tmse_smoothing: reference " + shape_string(reference.shape()) + " does not match " +
                         shape_string(p.shape()));
  }
  if (!(tau > 0.0)) throw std::invalid_argument("tmse_smoothing: threshold must be positive");
  const std::size_t b = p.dim(0), n = p.dim(1), c = p.dim(2);
  if (degenerate) *degenerate = n < 2;
  if (n < 2) return probs.tape().constant(BasicTensor<T>::scalar(T{0}));

  const double count = static_cast<double>(b * (n - 1) * c);
  BasicTensor<T> coeff(p.shape());  // d(loss)/d(p) per element
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t t = 1; t < n; ++t)
      for (std::size_t k = 0; k < c; ++k) {
        const std::size_t cur = (i * n + t) * c + k, prev = (i * n + t - 1) * c + k;
        const double pc = std::max(static_cast<double>(p[cur]), kProbFloor);
        const double d = std::log(pc) - std::log(std::max(static_cast<double>(reference[prev]), kProbFloor));
        if (std::abs(d) < tau) {
          total += d * d;
          if (static_cast<double>(p[cur]) >= kProbFloor) coeff[cur] = static_cast<T>(2.0 * d / (pc * count));
        } else {
          total += tau * tau;
        }
      }
  return probs.tape().record("tmse_smoothing", BasicTensor<T>::scalar(static_cast<T>(total / count)), {probs},
                             [probs, coeff = std::move(coeff)](Tape<T>& t, const BasicTensor<T>& g) {
                               auto* gp = t.grad_slot(probs);
                               for (std::size_t i = 0; i < coeff.size(); ++i) (*gp)[i] += g[0] * coeff[i];
                             });
}

template <typename T>
Var<T> mse_loss(Var<T> pred, const BasicTensor<T>& target) {
  const auto& p = pred.value();
  if (p.shape() != target.shape()) {
    throw DimensionError("mse_loss: prediction " + shape_string(p.shape()) + " vs target " +
                         shape_string(target.shape()));
  }
  if (p.size() == 0) throw DimensionError("mse_loss: empty input");
  const double n = static_cast<double>(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(target[i]);
    total += d * d;
  }
  return pred.tape().record("mse_loss", BasicTensor<T>::scalar(static_cast<T>(total / n)), {pred},
                            [pred, target, n](Tape<T>& t, const BasicTensor<T>& g) {
                              auto* gp = t.grad_slot(pred);
                              const auto& p = pred.value();
                              for (std::size_t i = 0; i < p.size(); ++i)
                                (*gp)[i] += static_cast<T>(2.0 * static_cast<double>(g[0]) *
                                                           (static_cast<double>(p[i]) - target[i]) / n);
                            });
}

std::vector<double> effective_number_weights(std::span<const int> labels, std::size_t classes, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("effective-number beta must lie in (0, 1)");
  std::vector<double> counts(classes, 0.0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw std::invalid_argument("label outside class range");
    counts[static_cast<std::size_t>(y)] += 1.0;
  }
  std::vector<double> w(classes, 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] > 0) w[c] = (1.0 - beta) / (1.0 - std::pow(beta, counts[c]));
    total += w[c];
  }
  if (total > 0)
    for (auto& v : w) v *= static_cast<double>(classes) / total;
  return w;
}

#define P2LHAP_INSTANTIATE_LOSSES(T)                                                     \
  template Var<T> cross_entropy(Var<T>, std::span<const int>, std::span<const double>); \
  template Var<T> tmse_smoothing(Var<T>, const BasicTensor<T>&, double, bool*);          \
  template Var<T> mse_loss(Var<T>, const BasicTensor<T>&);

P2LHAP_INSTANTIATE_LOSSES(float)
P2LHAP_INSTANTIATE_LOSSES(double)

}  // namespace p2lhap
