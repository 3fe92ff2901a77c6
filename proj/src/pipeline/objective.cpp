#include "p2lhap/objective.hpp"

namespace p2lhap {

Tensor normalized_future(const PatchBatch& batch) {
  Tensor out(batch.future_signal.shape());
  const std::size_t m = batch.channels, len = batch.horizon * batch.patch_len;
  for (std::size_t b = 0; b < batch.batch; ++b)
    for (std::size_t c = 0; c < m; ++c) {
      const double mu = batch.norm_stats.at(b).mean.at(c);
      const double sd = static_cast<double>(batch.norm_stats[b].stddev.at(c)) + kNormEps;
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t i = (b * m + c) * len + t;
        out[i] = static_cast<float>((batch.future_signal[i] - mu) / sd);
      }
    }
  return out;
}

Tensor denormalize_future(const Tensor& normalized, const PatchBatch& batch) {
  if (normalized.shape() != batch.future_signal.shape()) {
    throw DimensionError("denormalize_future: " + shape_string(normalized.shape()) + " vs " +
                         shape_string(batch.future_signal.shape()));
  }
  if (batch.norm_stats.size() != batch.batch) throw DataError("batch is missing normalization statistics");
  Tensor out(normalized.shape());
  const std::size_t m = batch.channels, len = batch.horizon * batch.patch_len;
  for (std::size_t b = 0; b < batch.batch; ++b)
    for (std::size_t c = 0; c < m; ++c) {
      const double mu = batch.norm_stats[b].mean.at(c);
      const double sd = static_cast<double>(batch.norm_stats[b].stddev.at(c)) + kNormEps;
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t i = (b * m + c) * len + t;
        out[i] = static_cast<float>(normalized[i] * sd + mu);
      }
    }
  return out;
}

template <typename T>
Var<T> real_patch_probs(const ForwardResult<T>& result) {
  const std::size_t n = result.class_probs.dim(1);
  return slice(result.class_probs, 1, 0, n - 1);
}

template <typename T>
Objective<T> objective(const ModelConfig& config, const ForwardResult<T>& result, const PatchBatch& batch,
                       const LossFlags& flags, const BasicTensor<T>* seg_reference) {
  Objective<T> o;
  if (config.mode == ForecastMode::kSignal) {
    const BasicTensor<T> target = normalized_future(batch).template cast<T>();
    o.total = mse_loss(result.signal, target);
    o.report = total_loss(0.0, 0.0, static_cast<double>(o.total.value()[0]));
    return o;
  }
  Var<T> probs = real_patch_probs(result);
  Var<T> cls = cross_entropy(probs, batch.patch_labels, flags.class_weights);
  o.total = cls;
  double l_seg = 0.0, l_pre = 0.0;
  if (flags.segmentation) {
    Var<T> seg = seg_reference ? tmse_smoothing(probs, *seg_reference, flags.smoothing_threshold,
                                                &o.segmentation_degenerate)
                               : tmse_smoothing(probs, flags.smoothing_threshold, &o.segmentation_degenerate);
    l_seg = static_cast<double>(seg.value()[0]);
    o.total = add(o.total, seg);
  }
  if (flags.forecast && config.horizon > 0) {
    Var<T> pre = forecast_loss(result.forecast_probs, batch.future_labels, flags.class_weights);
    l_pre = static_cast<double>(pre.value()[0]);
    o.total = add(o.total, pre);
  }
  o.report = total_loss(static_cast<double>(cls.value()[0]), l_seg, l_pre);
  return o;
}

template Var<float> real_patch_probs(const ForwardResult<float>&);
template Var<double> real_patch_probs(const ForwardResult<double>&);
template Objective<float> objective(const ModelConfig&, const ForwardResult<float>&, const PatchBatch&,
                                    const LossFlags&, const BasicTensor<float>*);
template Objective<double> objective(const ModelConfig&, const ForwardResult<double>&, const PatchBatch&,
                                     const LossFlags&, const BasicTensor<double>*);

}  // namespace p2lhap
