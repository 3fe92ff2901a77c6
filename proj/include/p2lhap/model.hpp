#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "p2lhap/ops.hpp"
#include "p2lhap/random.hpp"

namespace p2lhap {

enum class ForecastMode {
  kLabel,   ///< patch classification plus future-label forecasting
  kSignal,  ///< raw future-signal regression from the encoder output
};

std::string to_string(ForecastMode mode);
ForecastMode parse_forecast_mode(const std::string& s);

struct ModelConfig {
  std::size_t dim = 128;       ///< D
  std::size_t heads = 8;       ///< H; per-head key width is D / H
  std::size_t layers = 3;
  std::size_t ffn_dim = 256;
  std::size_t classes = 4;     ///< C
  std::size_t channels = 3;    ///< M
  std::size_t window = 200;    ///< samples per window
  std::size_t patch_len = 10;  ///< P
  std::size_t stride = 10;     ///< S
  std::size_t horizon = 0;     ///< T_p future patches
  double decoder_temperature = 1.0;
  /// Adds the encoder output back onto the cross-attention result.
  bool decoder_residual = true;
  double dropout = 0.1;
  ForecastMode mode = ForecastMode::kLabel;

  std::vector<std::string> class_names;
  std::vector<std::string> channel_names;
  double sample_rate_hz = 20.0;

  std::size_t num_patches() const;  ///< N
  std::size_t key_dim() const { return dim / heads; }
  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

/// Index of each parameter inside the flat, canonically ordered list.
struct ParamLayout {
  struct Layer {
    std::size_t wq, wk, wv, wo, bo, norm1_gamma, norm1_beta, ffn_w1, ffn_b1, ffn_w2, ffn_b2, norm2_gamma,
        norm2_beta;
  };
  std::size_t embed_wp = 0, embed_wpos = 0;
  std::vector<Layer> layers;
  std::optional<std::size_t> dec_wq, dec_wk, dec_wv, cls_w, cls_b, fc_w, fc_b, sig_w, sig_b;

  std::vector<std::string> names;
  std::vector<Shape> shapes;

  explicit ParamLayout(const ModelConfig& config);
  std::size_t count() const { return names.size(); }
  std::size_t index_of(const std::string& name) const;
};

/// Options for one forward pass.
struct ForwardOptions {
  NormMode norm = NormMode::kEval;
  Rng* dropout_rng = nullptr;  ///< dropout is active only when set
  bool trace_attention = false;
};

template <typename T>
struct ForwardResult {
  Var<T> embedded;        ///< [B*M, N, D]
  Var<T> encoded;         ///< Z, [B*M, N, D]
  Var<T> decoded;         ///< Z', [B*M, N, D]; invalid in signal mode
  Var<T> class_probs;     ///< [B, N, C]
  Var<T> forecast_probs;  ///< [B, T_p, C]; invalid without a label horizon
  Var<T> signal;          ///< [B, M, T_p*P] in normalized units; signal mode only
  std::vector<BasicTensor<T>> encoder_attention;  ///< per layer [B*M*H, N, N]
  BasicTensor<T> decoder_attention;               ///< [B*M, N, N]
};

/// Parameters and running statistics of a P2LHAP network.
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);
  Model(ModelConfig config, std::vector<Tensor> params, std::vector<BatchNormStats<float>> norms);

  const ModelConfig& config() const noexcept { return config_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  std::vector<Tensor>& params() noexcept { return params_; }
  const std::vector<Tensor>& params() const noexcept { return params_; }
  /// Two per encoder layer: after attention, after the feed-forward block.
  std::vector<BatchNormStats<float>>& norms() noexcept { return norms_; }
  const std::vector<BatchNormStats<float>>& norms() const noexcept { return norms_; }
  std::size_t parameter_count() const;

 private:
  ModelConfig config_;
  ParamLayout layout_;
  std::vector<Tensor> params_;
  std::vector<BatchNormStats<float>> norms_;
};

// Stage functions. `params` follows ParamLayout order; R = B * M rows.

template <typename T>
Var<T> embed(const ModelConfig& config, const ParamLayout& layout, std::span<const Var<T>> params, Var<T> patches);

/// One multi-head self-attention block over the patch axis of each row.
template <typename T>
Var<T> encoder_layer(const ModelConfig& config, const ParamLayout::Layer& layer, std::span<const Var<T>> params,
                     Var<T> x, BatchNormStats<T>& norm1, BatchNormStats<T>& norm2, const ForwardOptions& options,
                     BasicTensor<T>* attention);

template <typename T>
Var<T> encode(const ModelConfig& config, const ParamLayout& layout, std::span<const Var<T>> params, Var<T> x,
              std::span<BatchNormStats<T>> norms, const ForwardOptions& options,
              std::vector<BasicTensor<T>>* attention);

/// Temperature-scaled cross-attention: queries from z, keys and values from
/// the raw patches. Does not include the residual term.
template <typename T>
Var<T> cross_attention(const ModelConfig& config, const ParamLayout& layout, std::span<const Var<T>> params,
                       Var<T> z, Var<T> patches, BasicTensor<T>* attention);

template <typename T>
Var<T> decode(const ModelConfig& config, const ParamLayout& layout, std::span<const Var<T>> params, Var<T> z,
              Var<T> patches, BasicTensor<T>* attention);

/// [B*M, N, D] -> class probabilities [B, N, C].
template <typename T>
Var<T> classify(const ModelConfig& config, const ParamLayout& layout, std::span<const Var<T>> params,
                Var<T> decoded);

/// Last-patch representation -> [B, T_p, C].
template <typename T>
Var<T> forecast_labels(const ModelConfig& config, const ParamLayout& layout, std::span<const Var<T>> params,
                       Var<T> decoded);

/// Last-patch encoder output -> [B, M, T_p*P], normalized units.
template <typename T>
Var<T> forecast_signal(const ModelConfig& config, const ParamLayout& layout, std::span<const Var<T>> params,
                       Var<T> encoded);

template <typename T>
ForwardResult<T> forward(const ModelConfig& config, const ParamLayout& layout, std::span<const Var<T>> params,
                         std::span<BatchNormStats<T>> norms, Var<T> patches, const ForwardOptions& options);

/// Argmax per row of probs[..., C]; ties go to the lowest class id.
template <typename T>
std::vector<int> argmax_last(const BasicTensor<T>& probs);

/// Forward in float on a scratch tape, eval mode, no dropout.
ForwardResult<float> infer(const Model& model, Tape<float>& tape, const Tensor& patches,
                           bool trace_attention = false);

/// Parameters of `model` placed on `tape` as leaves.
template <typename T>
std::vector<Var<T>> bind_params(Tape<T>& tape, const std::vector<BasicTensor<T>>& params, bool requires_grad);

/// Checkpoint: "P2LH", u16 version, u32 config-length, JSON config, parameters
/// then running statistics as little-endian float32, trailing CRC32.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_model(const Model& model);
Model deserialize_model(std::span<const std::uint8_t> bytes);

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& json);

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// zlib CRC-32 of a byte range.
std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace p2lhap
