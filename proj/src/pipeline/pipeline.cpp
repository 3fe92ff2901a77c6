#include "p2lhap/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "p2lhap/losses.hpp"

namespace p2lhap {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be finite and >= 0");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be at least 1");
  if (patience == 0) throw std::invalid_argument("patience must be at least 1");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("lr_decay must lie in (0, 1]");
  if (lr_step_epochs == 0) throw std::invalid_argument("lr_step_epochs must be at least 1");
  if (!(smoothing_threshold > 0.0)) throw std::invalid_argument("smoothing threshold must be positive");
  if (smooth_size == 0 || smooth_size % 2 == 0) throw std::invalid_argument("smooth_size must be odd");
}

double adjust_learning_rate(const TrainConfig& config, std::size_t epoch) {
  return config.lr * std::pow(config.lr_decay, static_cast<double>(epoch / config.lr_step_epochs));
}

namespace {

json record_to_json(const EpochRecord& r) {
  json j;
  j["epoch"] = r.epoch;
  j["lr"] = r.lr;
  j["l_cls"] = r.loss.l_cls;
  j["l_seg"] = r.loss.l_seg;
  j["l_pre"] = r.loss.l_pre;
  j["l_total"] = r.loss.l_total;
  j["val_f1"] = r.val_f1;
  j["val_jaccard"] = r.val_jaccard;
  if (r.val_mse) j["val_mse"] = *r.val_mse;
  return j;
}

EpochRecord record_from_json(const json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch");
  r.lr = j.at("lr");
  r.loss = LossReport{j.at("l_cls"), j.at("l_seg"), j.at("l_pre"), j.at("l_total")};
  r.val_f1 = j.at("val_f1");
  r.val_jaccard = j.at("val_jaccard");
  if (j.contains("val_mse")) r.val_mse = j.at("val_mse").get<double>();
  return r;
}

}  // namespace

std::string history_line(const EpochRecord& record) { return record_to_json(record).dump(); }

WindowSet make_window_set(const SensorSequence& seq, const ModelConfig& model, std::size_t step, bool need_future) {
  WindowSet set;
  set.sequence = &seq;
  set.spec.window = model.window;
  set.spec.step = step == 0 ? model.window : step;
  set.spec.patch_len = model.patch_len;
  set.spec.stride = model.stride;
  set.spec.horizon = need_future ? model.horizon : 0;
  set.starts = window_starts(seq.length(), set.spec);
  if (set.starts.empty()) {
    throw DataError("sequence of " + std::to_string(seq.length()) + " samples holds no window of " +
                    std::to_string(model.window) + " samples" +
                    (set.spec.horizon > 0 ? " plus " + std::to_string(set.spec.horizon * model.patch_len) +
                                                " future samples"
                                          : std::string()));
  }
  return set;
}

namespace {

bool needs_future(const ModelConfig& model) { return model.horizon > 0; }

std::vector<std::span<const std::size_t>> chunks(std::span<const std::size_t> starts, std::size_t size) {
  std::vector<std::span<const std::size_t>> out;
  for (std::size_t i = 0; i < starts.size(); i += size) out.push_back(starts.subspan(i, std::min(size, starts.size() - i)));
  return out;
}

// Validation quality: weighted F1 (label mode) or negative MSE (signal mode).
struct Validation {
  double f1 = 0.0, jaccard = 0.0;
  std::optional<double> mse;
  double score() const { return mse ? -*mse : f1; }
};

Validation validate_model(const Model& model, const SensorSequence& val, std::size_t batch_size) {
  Validation v;
  if (model.config().mode == ForecastMode::kSignal) {
    v.mse = evaluate_signal_forecast(model, val, model.config().window, batch_size).model_mse;
  } else {
    const PatchPredictions p = predict_patches(model, val, batch_size);
    v.f1 = weighted_f1(p.pred, p.truth, model.config().classes);
    v.jaccard = jaccard(p.pred, p.truth, model.config().classes);
  }
  return v;
}

}  // namespace

Trainer::Trainer(ModelConfig model, TrainConfig train, const SensorSequence& train_split,
                 const SensorSequence& val_split)
    : model_config_(std::move(model)),
      train_config_(std::move(train)),
      layout_(model_config_),
      train_(train_split),
      val_(val_split) {
  train_config_.validate();
  Model init(model_config_, train_config_.seed);
  state_.params = init.params();
  state_.norms = init.norms();
  state_.lr = train_config_.lr;
  state_.adam = AdamState::for_params(state_.params, AdamConfig{train_config_.lr});
  state_.rng = Rng(train_config_.seed ^ 0xD1B54A32D192ED03ULL).state();
  init_windows();
}

Trainer::Trainer(ModelConfig model, TrainConfig train, const SensorSequence& train_split,
                 const SensorSequence& val_split, TrainState state)
    : model_config_(std::move(model)),
      train_config_(std::move(train)),
      layout_(model_config_),
      train_(train_split),
      val_(val_split),
      state_(std::move(state)) {
  train_config_.validate();
  Model check(model_config_, state_.params, state_.norms);  // validates shapes
  if (state_.adam.first_moment.size() != state_.params.size()) {
    throw DataError("training state optimizer does not match the parameter list");
  }
  init_windows();
}

void Trainer::init_windows() {
  check_vocabulary(model_config_, train_);
  check_vocabulary(model_config_, val_);
  train_windows_ = make_window_set(train_, model_config_, train_config_.window_step, needs_future(model_config_));
  val_windows_ = make_window_set(val_, model_config_, model_config_.window, model_config_.mode == ForecastMode::kSignal);
  flags_.segmentation = train_config_.segmentation_loss;
  flags_.forecast = train_config_.forecast_loss;
  flags_.smoothing_threshold = train_config_.smoothing_threshold;
  if (train_config_.class_balance && model_config_.mode == ForecastMode::kLabel) {
    const PatchBatch all = build_batch(train_, train_windows_.starts, train_windows_.spec);
    flags_.class_weights = effective_number_weights(all.patch_labels, model_config_.classes);
  }
}

const EpochRecord& Trainer::run_epoch() {
  if (state_.finished) throw std::logic_error("training already finished");
  const std::size_t epoch = state_.epoch + 1;
  const double lr = state_.lr;
  Rng rng;
  rng.set_state(state_.rng);
  std::vector<std::size_t> order = train_windows_.starts;
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<Tensor*> param_ptrs;
  for (auto& p : state_.params) param_ptrs.push_back(&p);
  LossReport sum{};
  std::size_t batches = 0;
  for (auto chunk : chunks(order, train_config_.batch_size)) {
    const PatchBatch batch = build_batch(train_, chunk, train_windows_.spec);
    try {
      Tape<float> tape;
      auto params = bind_params(tape, state_.params, true);
      ForwardOptions options;
      options.norm = NormMode::kTrain;
      options.dropout_rng = &rng;
      auto result = forward<float>(model_config_, layout_, params, state_.norms, tape.constant(batch.patches), options);
      auto obj = objective(model_config_, result, batch, flags_);
      if (!std::isfinite(obj.report.l_total)) throw NumericalError("non-finite loss");
      tape.backward(obj.total);
      std::vector<Tensor> grads;
      grads.reserve(params.size());
      for (const auto& v : params) grads.push_back(tape.grad(v));
      state_.adam.config.lr = lr;
      adam_step(param_ptrs, grads, state_.adam, layout_.names);
      sum.l_cls += obj.report.l_cls;
      sum.l_seg += obj.report.l_seg;
      sum.l_pre += obj.report.l_pre;
      sum.l_total += obj.report.l_total;
    } catch (const NumericalError& e) {
      throw NumericalError("epoch " + std::to_string(epoch) + " step " + std::to_string(state_.steps + 1) + ": " +
                           e.what());
    }
    ++state_.steps;
    ++batches;
  }
  const double nb = static_cast<double>(batches);
  EpochRecord rec;
  rec.epoch = epoch;
  rec.lr = lr;
  rec.loss = LossReport{sum.l_cls / nb, sum.l_seg / nb, sum.l_pre / nb, sum.l_total / nb};

  state_.rng = rng.state();
  state_.epoch = epoch;
  state_.lr = adjust_learning_rate(train_config_, epoch);

  const Validation v = validate_model(current_model(), val_, train_config_.batch_size);
  rec.val_f1 = v.f1;
  rec.val_jaccard = v.jaccard;
  rec.val_mse = v.mse;
  if (!state_.has_best || v.score() > state_.best_val_metric) {
    state_.has_best = true;
    state_.best_val_metric = v.score();
    state_.best_epoch = epoch;
    state_.epochs_since_improvement = 0;
    state_.best_params = state_.params;
    state_.best_norms = state_.norms;
  } else {
    ++state_.epochs_since_improvement;
  }
  state_.finished =
      epoch >= train_config_.max_epochs || state_.epochs_since_improvement >= train_config_.patience;
  state_.history.push_back(rec);
  return state_.history.back();
}

void Trainer::run(const std::function<void(const EpochRecord&)>& on_epoch) {
  while (!state_.finished) {
    const EpochRecord& rec = run_epoch();
    if (on_epoch) on_epoch(rec);
  }
}

Model Trainer::current_model() const { return Model(model_config_, state_.params, state_.norms); }

Model Trainer::best_model() const {
  if (!state_.has_best) return current_model();
  return Model(model_config_, state_.best_params, state_.best_norms);
}

// ---------------------------------------------------------------------------
// Training state files

namespace {

constexpr std::uint16_t kTrainStateVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_floats(std::vector<std::uint8_t>& out, const Tensor& t) {
  for (float f : t.data()) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint16_t u16() {
    need(2);
    auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
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
      std::memcpy(&f, &bits, 4);
    }
    return t;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("training state is truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put_norms(std::vector<std::uint8_t>& out, const std::vector<BatchNormStats<float>>& norms) {
  for (const auto& n : norms) {
    put_floats(out, n.running_mean);
    put_floats(out, n.running_var);
  }
}

std::vector<BatchNormStats<float>> read_norms(Reader& r, std::size_t count, std::size_t dim) {
  std::vector<BatchNormStats<float>> out;
  for (std::size_t i = 0; i < count; ++i) {
    BatchNormStats<float> s;
    s.running_mean = r.floats({dim});
    s.running_var = r.floats({dim});
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& c) {
  json j;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["lr_decay"] = c.lr_decay;
  j["lr_step_epochs"] = c.lr_step_epochs;
  j["seed"] = c.seed;
  j["window_step"] = c.window_step;
  j["segmentation_loss"] = c.segmentation_loss;
  j["forecast_loss"] = c.forecast_loss;
  j["smoothing_threshold"] = c.smoothing_threshold;
  j["class_balance"] = c.class_balance;
  j["smooth_size"] = c.smooth_size;
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  TrainConfig c;
  try {
    const json j = json::parse(text);
    c.batch_size = j.at("batch_size");
    c.lr = j.at("lr");
    c.max_epochs = j.at("max_epochs");
    c.patience = j.at("patience");
    c.lr_decay = j.at("lr_decay");
    c.lr_step_epochs = j.at("lr_step_epochs");
    c.seed = j.at("seed");
    c.window_step = j.at("window_step");
    c.segmentation_loss = j.at("segmentation_loss");
    c.forecast_loss = j.at("forecast_loss");
    c.smoothing_threshold = j.at("smoothing_threshold");
    c.class_balance = j.at("class_balance");
    c.smooth_size = j.at("smooth_size");
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid training config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<std::uint8_t> serialize_train_state(const TrainState& s, const ModelConfig& model,
                                                const TrainConfig& train) {
  json h;
  h["model"] = json::parse(config_to_json(model));
  h["train"] = json::parse(train_config_to_json(train));
  h["epoch"] = s.epoch;
  h["steps"] = s.steps;
  h["lr"] = s.lr;
  h["best_val_metric"] = s.best_val_metric;
  h["has_best"] = s.has_best;
  h["best_epoch"] = s.best_epoch;
  h["epochs_since_improvement"] = s.epochs_since_improvement;
  h["finished"] = s.finished;
  h["rng"] = {{"words", s.rng.words}, {"has_spare", s.rng.has_spare_normal}, {"spare", s.rng.spare_normal}};
  h["adam"] = {{"lr", s.adam.config.lr},
               {"beta1", s.adam.config.beta1},
               {"beta2", s.adam.config.beta2},
               {"eps", s.adam.config.eps},
               {"step", s.adam.step}};
  json hist = json::array();
  for (const auto& r : s.history) hist.push_back(record_to_json(r));
  h["history"] = hist;
  const std::string header = h.dump();

  std::vector<std::uint8_t> out = {'P', '2', 'T', 'S'};
  out.push_back(static_cast<std::uint8_t>(kTrainStateVersion & 0xFF));
  out.push_back(static_cast<std::uint8_t>(kTrainStateVersion >> 8));
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  for (const auto& p : s.params) put_floats(out, p);
  put_norms(out, s.norms);
  for (const auto& m : s.adam.first_moment) put_floats(out, m);
  for (const auto& v : s.adam.second_moment) put_floats(out, v);
  if (s.has_best) {
    for (const auto& p : s.best_params) put_floats(out, p);
    put_norms(out, s.best_norms);
  }
  put_u32(out, crc32_of(out));
  return out;
}

TrainState deserialize_train_state(std::span<const std::uint8_t> bytes, const ModelConfig& model,
                                   const TrainConfig& train) {
  if (bytes.size() < 14 || std::memcmp(bytes.data(), "P2TS", 4) != 0) throw DataError("not a training state file");
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  if (tail.u32() != crc32_of(body)) throw DataError("training state CRC mismatch (file is corrupt)");
  Reader r(body.subspan(4));
  const std::uint16_t version = r.u16();
  if (version != kTrainStateVersion) throw DataError("unsupported training state version " + std::to_string(version));
  const std::string header = r.text(r.u32());
  TrainState s;
  try {
    const json h = json::parse(header);
    if (h.at("model") != json::parse(config_to_json(model))) {
      throw DataError("training state was written for a different model configuration");
    }
    if (h.at("train") != json::parse(train_config_to_json(train))) {
      throw DataError("training state was written for a different training configuration");
    }
    s.epoch = h.at("epoch");
    s.steps = h.at("steps");
    s.lr = h.at("lr");
    s.best_val_metric = h.at("best_val_metric");
    s.has_best = h.at("has_best");
    s.best_epoch = h.at("best_epoch");
    s.epochs_since_improvement = h.at("epochs_since_improvement");
    s.finished = h.at("finished");
    s.rng.words = h.at("rng").at("words");
    s.rng.has_spare_normal = h.at("rng").at("has_spare");
    s.rng.spare_normal = h.at("rng").at("spare");
    const json& a = h.at("adam");
    s.adam.config = AdamConfig{a.at("lr"), a.at("beta1"), a.at("beta2"), a.at("eps")};
    s.adam.step = a.at("step");
    for (const auto& rec : h.at("history")) s.history.push_back(record_from_json(rec));
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid training state header: ") + e.what());
  }
  const ParamLayout layout(model);
  const std::size_t n_norms = 2 * model.layers;
  for (const auto& shape : layout.shapes) s.params.push_back(r.floats(shape));
  s.norms = read_norms(r, n_norms, model.dim);
  for (const auto& shape : layout.shapes) s.adam.first_moment.push_back(r.floats(shape));
  for (const auto& shape : layout.shapes) s.adam.second_moment.push_back(r.floats(shape));
  if (s.has_best) {
    for (const auto& shape : layout.shapes) s.best_params.push_back(r.floats(shape));
    s.best_norms = read_norms(r, n_norms, model.dim);
  }
  if (r.remaining() != 0) throw DataError("training state has trailing bytes");
  return s;
}

void save_train_state(const std::filesystem::path& path, const TrainState& state, const ModelConfig& model,
                      const TrainConfig& train) {
  const auto bytes = serialize_train_state(state, model, train);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write training state " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing training state " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_train_state(const std::filesystem::path& path, const ModelConfig& model, const TrainConfig& train) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open training state " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_train_state(bytes, model, train);
}

// ---------------------------------------------------------------------------
// Evaluation

void check_vocabulary(const ModelConfig& model, const SensorSequence& seq) {
  if (seq.channels() != model.channels) {
    throw DataError("data has " + std::to_string(seq.channels()) + " channels, model expects " +
                    std::to_string(model.channels));
  }
  if (model.mode == ForecastMode::kSignal) return;
  if (!model.class_names.empty() && seq.class_names != model.class_names) {
    std::string want, got;
    for (const auto& c : model.class_names) want += (want.empty() ? "" : ", ") + c;
    for (const auto& c : seq.class_names) got += (got.empty() ? "" : ", ") + c;
    throw DataError("label vocabulary mismatch: model [" + want + "], data [" + got + "]");
  }
  if (seq.num_classes() != model.classes) {
    throw DataError("data has " + std::to_string(seq.num_classes()) + " classes, model expects " +
                    std::to_string(model.classes));
  }
}

PatchPredictions predict_patches(const Model& model, const SensorSequence& seq, std::size_t batch_size) {
  const ModelConfig& cfg = model.config();
  if (cfg.mode != ForecastMode::kLabel) throw std::invalid_argument("patch predictions need a label-mode model");
  const WindowSet set = make_window_set(seq, cfg, cfg.window, false);
  PatchPredictions out;
  out.windows = set.starts.size();
  for (auto chunk : chunks(set.starts, std::max<std::size_t>(batch_size, 1))) {
    const PatchBatch batch = build_batch(seq, chunk, set.spec);
    Tape<float> tape;
    const auto result = infer(model, tape, batch.patches);
    const auto pred = argmax_last(result.class_probs.value());
    const std::size_t n = batch.num_patches, real = batch.real_patches();
    for (std::size_t b = 0; b < batch.batch; ++b)
      for (std::size_t k = 0; k < real; ++k) {
        out.pred.push_back(pred[b * n + k]);
        out.truth.push_back(batch.patch_labels[b * real + k]);
      }
  }
  return out;
}

LabelForecastReport evaluate_label_forecast(const Model& model, const SensorSequence& seq, std::size_t step,
                                            std::size_t batch_size) {
  const ModelConfig& cfg = model.config();
  if (cfg.mode != ForecastMode::kLabel || cfg.horizon == 0) {
    throw std::invalid_argument("label forecasting needs a label-mode model with a horizon");
  }
  const WindowSet set = make_window_set(seq, cfg, step, true);
  LabelForecastReport rep;
  std::size_t hits = 0, persist = 0, total = 0;
  for (auto chunk : chunks(set.starts, std::max<std::size_t>(batch_size, 1))) {
    const PatchBatch batch = build_batch(seq, chunk, set.spec);
    Tape<float> tape;
    const auto result = infer(model, tape, batch.patches);
    const auto pred = argmax_last(result.forecast_probs.value());
    const std::size_t real = batch.real_patches(), tp = batch.horizon;
    for (std::size_t b = 0; b < batch.batch; ++b) {
      const int last = batch.patch_labels[b * real + real - 1];
      for (std::size_t k = 0; k < tp; ++k) {
        const int truth = batch.future_labels[b * tp + k];
        hits += pred[b * tp + k] == truth;
        persist += last == truth;
        ++total;
      }
    }
    rep.windows += batch.batch;
  }
  rep.model_accuracy = static_cast<double>(hits) / static_cast<double>(total);
  rep.persistence_accuracy = static_cast<double>(persist) / static_cast<double>(total);
  return rep;
}

SignalForecastReport evaluate_signal_forecast(const Model& model, const SensorSequence& seq, std::size_t step,
                                              std::size_t batch_size) {
  const ModelConfig& cfg = model.config();
  if (cfg.mode != ForecastMode::kSignal) throw std::invalid_argument("signal forecasting needs a signal-mode model");
  const WindowSet set = make_window_set(seq, cfg, step, true);
  SignalForecastReport rep;
  std::vector<float> pred_all, truth_all, persist_all;
  const std::size_t m = cfg.channels, span_len = cfg.horizon * cfg.patch_len;
  for (auto chunk : chunks(set.starts, std::max<std::size_t>(batch_size, 1))) {
    const PatchBatch batch = build_batch(seq, chunk, set.spec);
    Tape<float> tape;
    const auto result = infer(model, tape, batch.patches);
    const Tensor pred = denormalize_future(result.signal.value(), batch);
    pred_all.insert(pred_all.end(), pred.data().begin(), pred.data().end());
    truth_all.insert(truth_all.end(), batch.future_signal.data().begin(), batch.future_signal.data().end());
    for (std::size_t b = 0; b < batch.batch; ++b)
      for (std::size_t c = 0; c < m; ++c) {
        const float last = seq.samples[(chunk[b] + cfg.window - 1) * m + c];
        persist_all.insert(persist_all.end(), span_len, last);
      }
    rep.windows += batch.batch;
  }
  rep.model_mse = forecast_mse(pred_all, truth_all);
  rep.persistence_mse = forecast_mse(persist_all, truth_all);
  return rep;
}

EvalReport evaluate(const Model& model, const SensorSequence& seq, std::size_t smooth_size, std::size_t batch_size) {
  const ModelConfig& cfg = model.config();
  check_vocabulary(cfg, seq);
  EvalReport rep;
  if (cfg.mode == ForecastMode::kSignal) {
    rep.signal_forecast = evaluate_signal_forecast(model, seq, cfg.window, batch_size);
    return rep;
  }
  rep.patches = predict_patches(model, seq, batch_size);
  rep.smoothed_pred = smooth(rep.patches.pred, smooth_size);
  rep.raw = compute_metrics(rep.patches.pred, rep.patches.truth, cfg.classes);
  rep.smoothed = compute_metrics(rep.smoothed_pred, rep.patches.truth, cfg.classes);
  if (cfg.horizon > 0) rep.label_forecast = evaluate_label_forecast(model, seq, cfg.window, batch_size);
  return rep;
}

std::string eval_report_json(const EvalReport& report, const ModelConfig& model) {
  json j;
  j["mode"] = to_string(model.mode);
  if (model.mode == ForecastMode::kLabel) {
    j["patches"] = report.patches.truth.size();
    j["windows"] = report.patches.windows;
    j["raw"] = json::parse(metrics_json(report.raw, model.class_names));
    j["smoothed"] = json::parse(metrics_json(report.smoothed, model.class_names));
  }
  if (report.label_forecast) {
    j["label_forecast"] = {{"windows", report.label_forecast->windows},
                           {"horizon", model.horizon},
                           {"model_accuracy", report.label_forecast->model_accuracy},
                           {"persistence_accuracy", report.label_forecast->persistence_accuracy}};
  }
  if (report.signal_forecast) {
    j["signal_forecast"] = {{"windows", report.signal_forecast->windows},
                            {"horizon", model.horizon},
                            {"model_mse", report.signal_forecast->model_mse},
                            {"persistence_mse", report.signal_forecast->persistence_mse}};
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Setup helpers

Splits prepare_splits(const SensorSequence& seq, const SplitSpec& spec, std::size_t window) {
  Splits s = sequential_split(seq, spec, window);
  const std::vector<float> means = column_means(s.train);
  fill_missing(s.train, means);
  fill_missing(s.val, means);
  fill_missing(s.test, means);
  return s;
}

void apply_preset(const std::string& name, ModelConfig& model, TrainConfig& train) {
  if (name == "small") {
    model.dim = 32;
    model.heads = 4;
    model.layers = 2;
    model.ffn_dim = 64;
    train.batch_size = 16;
    train.lr = 1e-3;
  } else if (name == "full") {
    model.dim = 128;
    model.heads = 8;
    model.layers = 3;
    model.ffn_dim = 256;
    train.batch_size = 64;
    train.lr = 1e-4;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "' (expected small or full)");
  }
}

void bind_to_data(ModelConfig& model, const SensorSequence& seq) {
  model.channels = seq.channels();
  model.channel_names = seq.channel_names;
  model.sample_rate_hz = seq.sample_rate_hz;
  if (model.mode == ForecastMode::kLabel) {
    model.classes = seq.num_classes();
    model.class_names = seq.class_names;
  } else {
    model.classes = std::max<std::size_t>(seq.num_classes(), 2);
    model.class_names = seq.num_classes() >= 2 ? seq.class_names : std::vector<std::string>{};
  }
}

std::vector<AblationRow> run_patch_ablation(const ModelConfig& base_model, const TrainConfig& base_train,
                                            const Splits& splits, const std::vector<std::size_t>& patch_sizes,
                                            const std::function<void(const AblationRow&)>& on_row) {
  if (base_model.mode != ForecastMode::kLabel) throw std::invalid_argument("the patch ablation needs label mode");
  auto train_one = [&](std::size_t p, std::size_t s, std::string label) {
    ModelConfig mc = base_model;
    mc.patch_len = p;
    mc.stride = s;
    const auto t0 = std::chrono::steady_clock::now();
    Trainer trainer(mc, base_train, splits.train, splits.val);
    trainer.run();
    const PatchPredictions pred = predict_patches(trainer.best_model(), splits.test, base_train.batch_size);
    AblationRow row;
    row.label = std::move(label);
    row.patch_len = p;
    row.stride = s;
    row.epochs = trainer.state().epoch;
    row.test_f1 = weighted_f1(pred.pred, pred.truth, mc.classes);
    row.test_jaccard = jaccard(pred.pred, pred.truth, mc.classes);
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
  };
  std::vector<AblationRow> rows;
  std::optional<AblationRow> unit;
  for (std::size_t p : patch_sizes) {
    rows.push_back(train_one(p, p, "P=" + std::to_string(p)));
    if (p == 1) unit = rows.back();
    if (on_row) on_row(rows.back());
  }
  // P = 1 with S = 1 is the same run as the P=1 sweep entry; reuse it when present.
  AblationRow none = unit ? *unit : train_one(1, 1, "no-patching");
  none.label = "no-patching";
  rows.push_back(none);
  if (on_row) on_row(rows.back());
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "label,patch_len,stride,epochs,test_f1,test_jaccard\n";
  char buf[64];
  for (const auto& r : rows) {
    out << r.label << ',' << r.patch_len << ',' << r.stride << ',' << r.epochs << ',';
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.test_f1, r.test_jaccard);
    out << buf << '\n';
  }
  return out.str();
}

}  // namespace p2lhap
