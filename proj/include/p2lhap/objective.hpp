#pragma once

#include <vector>

#include "p2lhap/data.hpp"
#include "p2lhap/losses.hpp"
#include "p2lhap/model.hpp"

namespace p2lhap {

struct LossFlags {
  bool segmentation = true;  ///< truncated-MSE smoothing term
  bool forecast = true;      ///< future-label term (label mode with a horizon)
  double smoothing_threshold = kDefaultSmoothingThreshold;
  std::vector<double> class_weights;  ///< empty: unweighted
};

template <typename T>
struct Objective {
  Var<T> total;
  LossReport report;
  bool segmentation_degenerate = false;
};

/// Future signal of each batch item in its window's normalized units, [B, M, T_p*P].
Tensor normalized_future(const PatchBatch& batch);
/// Inverse of normalized_future for model outputs.
Tensor denormalize_future(const Tensor& normalized, const PatchBatch& batch);

/// Real-patch class probabilities [B, N-1, C].
template <typename T>
Var<T> real_patch_probs(const ForwardResult<T>& result);

/// Label mode: l_cls over real patches, l_seg, l_pre over the horizon.
/// Signal mode: l_pre is the MSE in normalized units, other terms are 0.
/// `seg_reference` replaces the detached previous-patch probabilities.
template <typename T>
Objective<T> objective(const ModelConfig& config, const ForwardResult<T>& result, const PatchBatch& batch,
                       const LossFlags& flags, const BasicTensor<T>* seg_reference = nullptr);

}  // namespace p2lhap
