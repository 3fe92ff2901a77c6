#include "p2lhap/model.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "json.hpp"
#include "p2lhap/data.hpp"

namespace p2lhap {

using nlohmann::json;

std::string to_string(ForecastMode mode) { return mode == ForecastMode::kSignal ? "signal" : "label"; }

ForecastMode parse_forecast_mode(const std::string& s) {
  if (s == "label" || s == "label-forecast") return ForecastMode::kLabel;
  if (s == "signal" || s == "signal-forecast") return ForecastMode::kSignal;
  throw std::invalid_argument("unknown mode '" + s + "' (expected label or signal)");
}

std::size_t ModelConfig::num_patches() const { return patch_count(window, patch_len, stride); }

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string(name) + " must be at least 1");
  };
  positive(dim, "dim");
  positive(heads, "heads");
  positive(layers, "layers");
  positive(ffn_dim, "ffn_dim");
  positive(channels, "channels");
  positive(window, "window");
  positive(patch_len, "patch_len");
  positive(stride, "stride");
  if (dim % heads != 0) {
    throw std::invalid_argument("dim " + std::to_string(dim) + " is not divisible by heads " + std::to_string(heads));
  }
  if (patch_len > window) {
    throw std::invalid_argument("patch_len " + std::to_string(patch_len) + " exceeds window " + std::to_string(window));
  }
  if (mode == ForecastMode::kLabel && classes < 2) throw std::invalid_argument("classes must be at least 2");
  if (mode == ForecastMode::kSignal && horizon == 0) {
    throw std::invalid_argument("signal mode needs a horizon of at least one patch");
  }
  if (!(decoder_temperature > 0.0)) throw std::invalid_argument("decoder temperature must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (!class_names.empty() && class_names.size() != classes) {
    throw std::invalid_argument(std::to_string(class_names.size()) + " class names for " + std::to_string(classes) +
                                " classes");
  }
  if (!channel_names.empty() && channel_names.size() != channels) {
    throw std::invalid_argument(std::to_string(channel_names.size()) + " channel names for " +
                                std::to_string(channels) + " channels");
  }
}

ParamLayout::ParamLayout(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.dim, h = c.heads, dk = c.key_dim(), p = c.patch_len, n = c.num_patches();
  auto add = [&](std::string name, Shape shape) {
    names.push_back(std::move(name));
    shapes.push_back(std::move(shape));
    return names.size() - 1;
  };
  embed_wp = add("embed.wp", {d, p});
  embed_wpos = add("embed.wpos", {d, n});
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string pre = "encoder." + std::to_string(l) + ".";
    Layer L{};
    L.wq = add(pre + "wq", {d, h * dk});
    L.wk = add(pre + "wk", {d, h * dk});
    L.wv = add(pre + "wv", {d, h * d});
    L.wo = add(pre + "wo", {h * d, d});
    L.bo = add(pre + "bo", {d});
    L.norm1_gamma = add(pre + "norm1.gamma", {d});
    L.norm1_beta = add(pre + "norm1.beta", {d});
    L.ffn_w1 = add(pre + "ffn.w1", {d, c.ffn_dim});
    L.ffn_b1 = add(pre + "ffn.b1", {c.ffn_dim});
    L.ffn_w2 = add(pre + "ffn.w2", {c.ffn_dim, d});
    L.ffn_b2 = add(pre + "ffn.b2", {d});
    L.norm2_gamma = add(pre + "norm2.gamma", {d});
    L.norm2_beta = add(pre + "norm2.beta", {d});
    layers.push_back(L);
  }
  if (c.mode == ForecastMode::kLabel) {
    dec_wq = add("decoder.wq", {d, d});
    dec_wk = add("decoder.wk", {p, d});
    dec_wv = add("decoder.wv", {p, d});
    cls_w = add("classifier.w", {c.channels * d, c.classes});
    cls_b = add("classifier.b", {c.classes});
    if (c.horizon > 0) {
      fc_w = add("forecast.w", {c.channels * d, c.horizon * c.classes});
      fc_b = add("forecast.b", {c.horizon * c.classes});
    }
  } else {
    sig_w = add("signal.w", {d, c.horizon * p});
    sig_b = add("signal.b", {c.horizon * p});
  }
}

std::size_t ParamLayout::index_of(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::out_of_range("no parameter named " + name);
  return static_cast<std::size_t>(it - names.begin());
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)), layout_(config_) {
  Rng rng(seed);
  for (std::size_t i = 0; i < layout_.count(); ++i) {
    const std::string& name = layout_.names[i];
    const Shape& shape = layout_.shapes[i];
    Tensor t(shape);
    const bool is_gamma = name.ends_with(".gamma");
    const bool is_bias = name.ends_with(".b") || name.ends_with(".bo") || name.ends_with(".b1") ||
                         name.ends_with(".b2") || name.ends_with(".beta");
    if (is_gamma) {
      t.fill(1.f);
    } else if (name == "embed.wpos") {
      for (auto& v : t.data()) v = static_cast<float>(rng.normal(0.0, 0.02));
    } else if (name.starts_with("signal.")) {
      // zero head: an untrained model forecasts each window's channel mean
    } else if (!is_bias) {
      // embed.wp is [D, P] applied as W x, so its fan-in is the trailing axis
      const std::size_t fan_in = name == "embed.wp" ? shape[1] : shape[0];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
    }
    params_.push_back(std::move(t));
  }
  for (std::size_t l = 0; l < config_.layers; ++l) {
    norms_.push_back(BatchNormStats<float>::identity(config_.dim));
    norms_.push_back(BatchNormStats<float>::identity(config_.dim));
  }
}

Model::Model(ModelConfig config, std::vector<Tensor> params, std::vector<BatchNormStats<float>> norms)
    : config_(std::move(config)), layout_(config_), params_(std::move(params)), norms_(std::move(norms)) {
  if (params_.size() != layout_.count()) {
    throw std::invalid_argument("expected " + std::to_string(layout_.count()) + " parameters, got " +
                                std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].shape() != layout_.shapes[i]) {
      throw DimensionError("parameter " + layout_.names[i] + " has shape " + shape_string(params_[i].shape()) +
                           ", expected " + shape_string(layout_.shapes[i]));
    }
  }
  if (norms_.size() != 2 * config_.layers) throw std::invalid_argument("wrong number of batchnorm statistics");
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

namespace {

template <typename T>
Var<T> dropout(Var<T> x, double rate, const ForwardOptions& options) {
  if (options.dropout_rng == nullptr || rate <= 0.0) return x;
  BasicTensor<T> mask(x.shape());
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask.data()) m = options.dropout_rng->uniform() < rate ? T{0} : keep;
  return mul_constant(x, mask);
}

template <typename T>
void expect_shape(Var<T> x, const Shape& shape, const char* what) {
  if (x.shape() != shape) {
    throw DimensionError(std::string(what) + ": expected " + shape_string(shape) + ", got " + shape_string(x.shape()));
  }
}

// [R, N, H*w] -> [R*H, N, w]
template <typename T>
Var<T> split_heads(Var<T> x, std::size_t heads) {
  const std::size_t r = x.dim(0), n = x.dim(1), w = x.dim(2) / heads;
  return reshape(permute(reshape(x, {r, n, heads, w}), {0, 2, 1, 3}), {r * heads, n, w});
}

// [R*H, N, w] -> [R, N, H*w]
template <typename T>
Var<T> merge_heads(Var<T> x, std::size_t heads) {
  const std::size_t r = x.dim(0) / heads, n = x.dim(1), w = x.dim(2);
  return reshape(permute(reshape(x, {r, heads, n, w}), {0, 2, 1, 3}), {r, n, heads * w});
}

std::size_t batch_of(const ModelConfig& c, std::size_t rows) {
  if (rows == 0 || rows % c.channels != 0) {
    throw DimensionError(std::to_string(rows) + " channel rows is not a multiple of " + std::to_string(c.channels) +
                         " channels");
  }
  return rows / c.channels;
}

// [R, N, D] -> last patch concatenated over channels, [B, M*D]
template <typename T>
Var<T> last_patch_flat(const ModelConfig& c, Var<T> x) {
  const std::size_t r = x.dim(0), n = x.dim(1), d = x.dim(2);
  return reshape(slice(x, 1, n - 1, 1), {batch_of(c, r), c.channels * d});
}

}  // namespace

template <typename T>
Var<T> embed(const ModelConfig& c, const ParamLayout& layout, std::span<const Var<T>> params, Var<T> patches) {
  const std::size_t n = c.num_patches();
  if (patches.shape().size() != 3 || patches.dim(1) != n || patches.dim(2) != c.patch_len) {
    throw DimensionError("embed: patches must be [B*M, " + std::to_string(n) + ", " + std::to_string(c.patch_len) +
                         "], got " + shape_string(patches.shape()));
  }
  batch_of(c, patches.dim(0));
  Var<T> x = matmul_bt(patches, params[layout.embed_wp]);
  return add_broadcast(x, transpose(params[layout.embed_wpos]));
}

template <typename T>
Var<T> encoder_layer(const ModelConfig& c, const ParamLayout::Layer& L, std::span<const Var<T>> params, Var<T> x,
                     BatchNormStats<T>& norm1, BatchNormStats<T>& norm2, const ForwardOptions& options,
                     BasicTensor<T>* attention) {
  const std::size_t h = c.heads;
  Var<T> q = split_heads(matmul(x, params[L.wq]), h);
  Var<T> k = split_heads(matmul(x, params[L.wk]), h);
  Var<T> v = split_heads(matmul(x, params[L.wv]), h);
  Var<T> scores = scale(bmm_bt(q, k), 1.0 / std::sqrt(static_cast<double>(c.key_dim())));
  Var<T> weights = softmax(scores, 2);
  if (attention) *attention = weights.value();
  weights = dropout(weights, c.dropout, options);
  Var<T> heads = merge_heads(bmm(weights, v), h);
  Var<T> attn = add_broadcast(matmul(heads, params[L.wo]), params[L.bo]);
  Var<T> y = batchnorm(add(x, attn), params[L.norm1_gamma], params[L.norm1_beta], norm1, options.norm, 2);
  Var<T> f = gelu(add_broadcast(matmul(y, params[L.ffn_w1]), params[L.ffn_b1]));
  f = dropout(add_broadcast(matmul(f, params[L.ffn_w2]), params[L.ffn_b2]), c.dropout, options);
  return batchnorm(add(y, f), params[L.norm2_gamma], params[L.norm2_beta], norm2, options.norm, 2);
}

template <typename T>
Var<T> encode(const ModelConfig& c, const ParamLayout& layout, std::span<const Var<T>> params, Var<T> x,
              std::span<BatchNormStats<T>> norms, const ForwardOptions& options,
              std::vector<BasicTensor<T>>* attention) {
  if (norms.size() != 2 * layout.layers.size()) throw std::invalid_argument("encode: wrong number of norm stats");
  if (attention) attention->clear();
  for (std::size_t l = 0; l < layout.layers.size(); ++l) {
    BasicTensor<T> trace;
    try {
      x = encoder_layer(c, layout.layers[l], params, x, norms[2 * l], norms[2 * l + 1], options,
                        attention ? &trace : nullptr);
    } catch (const NumericalError& e) {
      throw NumericalError("encoder layer " + std::to_string(l) + ": " + e.what());
    }
    if (attention) attention->push_back(std::move(trace));
  }
  return x;
}

template <typename T>
Var<T> cross_attention(const ModelConfig& c, const ParamLayout& layout, std::span<const Var<T>> params, Var<T> z,
                       Var<T> patches, BasicTensor<T>* attention) {
  if (!layout.dec_wq) throw std::logic_error("model has no decoder");
  expect_shape(z, {patches.dim(0), patches.dim(1), c.dim}, "decoder input");
  Var<T> q = matmul(z, params[*layout.dec_wq]);
  Var<T> k = matmul(patches, params[*layout.dec_wk]);
  Var<T> v = matmul(patches, params[*layout.dec_wv]);
  Var<T> weights = softmax(scale(bmm_bt(q, k), 1.0 / c.decoder_temperature), 2);
  if (attention) *attention = weights.value();
  return bmm(weights, v);
}

template <typename T>
Var<T> decode(const ModelConfig& c, const ParamLayout& layout, std::span<const Var<T>> params, Var<T> z,
              Var<T> patches, BasicTensor<T>* attention) {
  try {
    Var<T> attn = cross_attention(c, layout, params, z, patches, attention);
    return c.decoder_residual ? add(z, attn) : attn;
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("decoder: ") + e.what());
  }
}

template <typename T>
Var<T> classify(const ModelConfig& c, const ParamLayout& layout, std::span<const Var<T>> params, Var<T> decoded) {
  if (!layout.cls_w) throw std::logic_error("model has no classification head");
  const std::size_t r = decoded.dim(0), n = decoded.dim(1), d = decoded.dim(2);
  const std::size_t b = batch_of(c, r);
  Var<T> x = reshape(permute(reshape(decoded, {b, c.channels, n, d}), {0, 2, 1, 3}), {b, n, c.channels * d});
  Var<T> logits = add_broadcast(matmul(x, params[*layout.cls_w]), params[*layout.cls_b]);
  return softmax(logits, 2);
}

template <typename T>
Var<T> forecast_labels(const ModelConfig& c, const ParamLayout& layout, std::span<const Var<T>> params,
                       Var<T> decoded) {
  if (c.horizon == 0 || !layout.fc_w) {
    throw std::invalid_argument("label forecasting needs a horizon of at least one patch");
  }
  Var<T> flat = last_patch_flat(c, decoded);
  Var<T> logits = add_broadcast(matmul(flat, params[*layout.fc_w]), params[*layout.fc_b]);
  return softmax(reshape(logits, {flat.dim(0), c.horizon, c.classes}), 2);
}

template <typename T>
Var<T> forecast_signal(const ModelConfig& c, const ParamLayout& layout, std::span<const Var<T>> params,
                       Var<T> encoded) {
  if (!layout.sig_w) throw std::invalid_argument("signal forecasting requires a signal-mode model");
  const std::size_t r = encoded.dim(0), n = encoded.dim(1), d = encoded.dim(2);
  Var<T> last = reshape(slice(encoded, 1, n - 1, 1), {r, d});
  Var<T> out = add_broadcast(matmul(last, params[*layout.sig_w]), params[*layout.sig_b]);
  return reshape(out, {batch_of(c, r), c.channels, c.horizon * c.patch_len});
}

template <typename T>
ForwardResult<T> forward(const ModelConfig& c, const ParamLayout& layout, std::span<const Var<T>> params,
                         std::span<BatchNormStats<T>> norms, Var<T> patches, const ForwardOptions& options) {
  if (params.size() != layout.count()) {
    throw std::invalid_argument("forward: expected " + std::to_string(layout.count()) + " parameters, got " +
                                std::to_string(params.size()));
  }
  ForwardResult<T> r;
  r.embedded = embed(c, layout, params, patches);
  r.encoded = encode(c, layout, params, r.embedded, norms, options,
                     options.trace_attention ? &r.encoder_attention : nullptr);
  if (c.mode == ForecastMode::kSignal) {
    r.signal = forecast_signal(c, layout, params, r.encoded);
    return r;
  }
  r.decoded = decode(c, layout, params, r.encoded, patches, options.trace_attention ? &r.decoder_attention : nullptr);
  r.class_probs = classify(c, layout, params, r.decoded);
  if (c.horizon > 0) r.forecast_probs = forecast_labels(c, layout, params, r.decoded);
  return r;
}

template <typename T>
std::vector<int> argmax_last(const BasicTensor<T>& probs) {
  if (probs.rank() == 0) throw DimensionError("argmax of a scalar");
  const std::size_t c = probs.dim(probs.rank() - 1);
  std::vector<int> out;
  out.reserve(probs.size() / c);
  for (std::size_t row = 0; row * c < probs.size(); ++row) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k)
      if (probs[row * c + k] > probs[row * c + best]) best = k;
    out.push_back(static_cast<int>(best));
  }
  return out;
}

template <typename T>
std::vector<Var<T>> bind_params(Tape<T>& tape, const std::vector<BasicTensor<T>>& params, bool requires_grad) {
  std::vector<Var<T>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(tape.leaf(p, requires_grad));
  return out;
}

ForwardResult<float> infer(const Model& model, Tape<float>& tape, const Tensor& patches, bool trace_attention) {
  auto params = bind_params(tape, model.params(), false);
  auto norms = model.norms();
  ForwardOptions options;
  options.norm = NormMode::kEval;
  options.trace_attention = trace_attention;
  return forward<float>(model.config(), model.layout(), params, norms, tape.constant(patches), options);
}

#define P2LHAP_INSTANTIATE_MODEL(T)                                                                              \
  template Var<T> embed(const ModelConfig&, const ParamLayout&, std::span<const Var<T>>, Var<T>);                \
  template Var<T> encoder_layer(const ModelConfig&, const ParamLayout::Layer&, std::span<const Var<T>>, Var<T>,  \
                                BatchNormStats<T>&, BatchNormStats<T>&, const ForwardOptions&, BasicTensor<T>*); \
  template Var<T> encode(const ModelConfig&, const ParamLayout&, std::span<const Var<T>>, Var<T>,                \
                         std::span<BatchNormStats<T>>, const ForwardOptions&, std::vector<BasicTensor<T>>*);     \
  template Var<T> cross_attention(const ModelConfig&, const ParamLayout&, std::span<const Var<T>>, Var<T>,       \
                                  Var<T>, BasicTensor<T>*);                                                       \
  template Var<T> decode(const ModelConfig&, const ParamLayout&, std::span<const Var<T>>, Var<T>, Var<T>,        \
                         BasicTensor<T>*);                                                                        \
  template Var<T> classify(const ModelConfig&, const ParamLayout&, std::span<const Var<T>>, Var<T>);             \
  template Var<T> forecast_labels(const ModelConfig&, const ParamLayout&, std::span<const Var<T>>, Var<T>);      \
  template Var<T> forecast_signal(const ModelConfig&, const ParamLayout&, std::span<const Var<T>>, Var<T>);      \
  template ForwardResult<T> forward(const ModelConfig&, const ParamLayout&, std::span<const Var<T>>,             \
                                    std::span<BatchNormStats<T>>, Var<T>, const ForwardOptions&);                \
  template std::vector<int> argmax_last(const BasicTensor<T>&);                                                  \
  template std::vector<Var<T>> bind_params(Tape<T>&, const std::vector<BasicTensor<T>>&, bool);

P2LHAP_INSTANTIATE_MODEL(float)
P2LHAP_INSTANTIATE_MODEL(double)

// ---- serialization ----

std::string config_to_json(const ModelConfig& c) {
  json j;
  j["dim"] = c.dim;
  j["heads"] = c.heads;
  j["layers"] = c.layers;
  j["ffn_dim"] = c.ffn_dim;
  j["classes"] = c.classes;
  j["channels"] = c.channels;
  j["window"] = c.window;
  j["patch_len"] = c.patch_len;
  j["stride"] = c.stride;
  j["horizon"] = c.horizon;
  j["decoder_temperature"] = c.decoder_temperature;
  j["decoder_residual"] = c.decoder_residual;
  j["dropout"] = c.dropout;
  j["mode"] = to_string(c.mode);
  j["class_names"] = c.class_names;
  j["channel_names"] = c.channel_names;
  j["sample_rate_hz"] = c.sample_rate_hz;
  return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
  ModelConfig c;
  try {
    const json j = json::parse(text);
    c.dim = j.at("dim");
    c.heads = j.at("heads");
    c.layers = j.at("layers");
    c.ffn_dim = j.at("ffn_dim");
    c.classes = j.at("classes");
    c.channels = j.at("channels");
    c.window = j.at("window");
    c.patch_len = j.at("patch_len");
    c.stride = j.at("stride");
    c.horizon = j.at("horizon");
    c.decoder_temperature = j.at("decoder_temperature");
    c.decoder_residual = j.at("decoder_residual");
    c.dropout = j.at("dropout");
    c.mode = parse_forecast_mode(j.at("mode"));
    c.class_names = j.at("class_names").get<std::vector<std::string>>();
    c.channel_names = j.at("channel_names").get<std::vector<std::string>>();
    c.sample_rate_hz = j.at("sample_rate_hz");
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid model config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_floats(std::vector<std::uint8_t>& out, const Tensor& t) {
  for (float f : t.data()) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    put_u32(out, bits);
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  Tensor floats(const Shape& shape) {
    Tensor t(shape);
    for (auto& f : t.data()) {
      const std::uint32_t bits = u32();
      std::memcpy(&f, &bits, sizeof f);
    }
    return t;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("checkpoint is truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(crc32(crc, bytes.data(), static_cast<uInt>(bytes.size())));
}

std::vector<std::uint8_t> serialize_model(const Model& model) {
  std::vector<std::uint8_t> out = {'P', '2', 'L', 'H'};
  put_u16(out, kCheckpointVersion);
  const std::string cfg = config_to_json(model.config());
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.insert(out.end(), cfg.begin(), cfg.end());
  for (const auto& p : model.params()) put_floats(out, p);
  for (const auto& n : model.norms()) {
    put_floats(out, n.running_mean);
    put_floats(out, n.running_var);
  }
  put_u32(out, crc32_of(out));
  return out;
}

Model deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 14 || std::memcmp(bytes.data(), "P2LH", 4) != 0) throw DataError("not a P2LH checkpoint");
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  if (tail.u32() != crc32_of(body)) throw DataError("checkpoint CRC mismatch (file is corrupt)");
  Reader r(body.subspan(4));
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t cfg_len = r.u32();
  ModelConfig config = config_from_json(r.text(cfg_len));
  ParamLayout layout(config);
  std::vector<Tensor> params;
  for (const auto& shape : layout.shapes) params.push_back(r.floats(shape));
  std::vector<BatchNormStats<float>> norms;
  for (std::size_t i = 0; i < 2 * config.layers; ++i) {
    BatchNormStats<float> s;
    s.running_mean = r.floats({config.dim});
    s.running_var = r.floats({config.dim});
    norms.push_back(std::move(s));
  }
  if (r.remaining() != 0) throw DataError("checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
  return Model(std::move(config), std::move(params), std::move(norms));
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace p2lhap
