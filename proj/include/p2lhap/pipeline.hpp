#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "p2lhap/adam.hpp"
#include "p2lhap/data.hpp"
#include "p2lhap/metrics.hpp"
#include "p2lhap/model.hpp"
#include "p2lhap/objective.hpp"
#include "p2lhap/segmentation.hpp"

namespace p2lhap {

struct TrainConfig {
  std::size_t batch_size = 64;
  double lr = 1e-4;
  std::size_t max_epochs = 30;
  std::size_t patience = 10;
  double lr_decay = 0.5;
  std::size_t lr_step_epochs = 10;
  std::uint64_t seed = 42;
  /// Offset between training window starts; 0 means the window length.
  std::size_t window_step = 0;
  bool segmentation_loss = true;
  bool forecast_loss = true;
  double smoothing_threshold = kDefaultSmoothingThreshold;
  bool class_balance = false;  ///< effective-number class weights
  std::size_t smooth_size = kDefaultSmoothSize;

  void validate() const;
};

/// lr0 * decay^floor(epoch / step_epochs); epoch counts completed epochs.
double adjust_learning_rate(const TrainConfig& config, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;  ///< rate used during this epoch
  LossReport loss;  ///< mean over the epoch's mini-batches
  double val_f1 = 0.0;
  double val_jaccard = 0.0;
  std::optional<double> val_mse;  ///< signal mode
};

/// One JSON object per line: epoch, lr, l_cls, l_seg, l_pre, l_total, val_f1, val_jaccard[, val_mse].
std::string history_line(const EpochRecord& record);

/// Everything needed to continue a run exactly where it stopped.
struct TrainState {
  std::size_t epoch = 0;  ///< completed epochs
  std::uint64_t steps = 0;
  double lr = 0.0;        ///< rate for the next epoch
  double best_val_metric = 0.0;
  bool has_best = false;
  std::size_t best_epoch = 0;
  std::size_t epochs_since_improvement = 0;
  bool finished = false;
  Rng::State rng;
  AdamState adam;
  std::vector<Tensor> params;
  std::vector<BatchNormStats<float>> norms;
  std::vector<Tensor> best_params;
  std::vector<BatchNormStats<float>> best_norms;
  std::vector<EpochRecord> history;
};

/// Windows used for training/validation batches of one split.
struct WindowSet {
  const SensorSequence* sequence = nullptr;
  WindowSpec spec;
  std::vector<std::size_t> starts;
};

WindowSet make_window_set(const SensorSequence& seq, const ModelConfig& model, std::size_t step, bool need_future);

class Trainer {
 public:
  /// Fresh run; parameters initialized from train.seed.
  Trainer(ModelConfig model, TrainConfig train, const SensorSequence& train_split, const SensorSequence& val_split);
  /// Continues from a saved state.
  Trainer(ModelConfig model, TrainConfig train, const SensorSequence& train_split, const SensorSequence& val_split,
          TrainState state);

  bool finished() const noexcept { return state_.finished; }
  /// Trains one epoch, validates, updates early stopping. Throws
  /// NumericalError naming the epoch and step on a non-finite loss.
  const EpochRecord& run_epoch();
  void run(const std::function<void(const EpochRecord&)>& on_epoch = {});

  const TrainState& state() const noexcept { return state_; }
  const ModelConfig& model_config() const noexcept { return model_config_; }
  const TrainConfig& train_config() const noexcept { return train_config_; }
  Model current_model() const;
  Model best_model() const;

 private:
  void init_windows();

  ModelConfig model_config_;
  TrainConfig train_config_;
  ParamLayout layout_;
  const SensorSequence& train_;
  const SensorSequence& val_;
  WindowSet train_windows_;
  WindowSet val_windows_;
  LossFlags flags_;
  TrainState state_;
};

std::vector<std::uint8_t> serialize_train_state(const TrainState& state, const ModelConfig& model,
                                                const TrainConfig& train);
/// Restores a state; the stored configs must match `model` and `train`.
TrainState deserialize_train_state(std::span<const std::uint8_t> bytes, const ModelConfig& model,
                                   const TrainConfig& train);
void save_train_state(const std::filesystem::path& path, const TrainState& state, const ModelConfig& model,
                      const TrainConfig& train);
TrainState load_train_state(const std::filesystem::path& path, const ModelConfig& model, const TrainConfig& train);

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& json);

/// Patch-level predictions over consecutive non-overlapping windows of a split.
struct PatchPredictions {
  std::vector<int> truth;
  std::vector<int> pred;
  std::size_t windows = 0;
};

/// Runs the model over windows of `seq` in chunks of `batch_size`.
PatchPredictions predict_patches(const Model& model, const SensorSequence& seq, std::size_t batch_size = 64);

struct LabelForecastReport {
  std::size_t windows = 0;
  double model_accuracy = 0.0;
  double persistence_accuracy = 0.0;  ///< repeat the last real patch's true label
};

struct SignalForecastReport {
  std::size_t windows = 0;
  double model_mse = 0.0;
  double persistence_mse = 0.0;  ///< repeat each channel's last observed sample
};

struct EvalReport {
  MetricsReport raw;
  MetricsReport smoothed;
  PatchPredictions patches;
  std::vector<int> smoothed_pred;
  std::optional<LabelForecastReport> label_forecast;
  std::optional<SignalForecastReport> signal_forecast;
};

/// Throws DataError when the checkpoint's class vocabulary differs from the data's.
void check_vocabulary(const ModelConfig& model, const SensorSequence& seq);

LabelForecastReport evaluate_label_forecast(const Model& model, const SensorSequence& seq, std::size_t step,
                                            std::size_t batch_size = 64);
SignalForecastReport evaluate_signal_forecast(const Model& model, const SensorSequence& seq, std::size_t step,
                                              std::size_t batch_size = 64);

/// Label mode: metrics before and after smoothing plus the label forecast
/// check when the model has a horizon. Signal mode: the signal forecast check.
EvalReport evaluate(const Model& model, const SensorSequence& seq, std::size_t smooth_size,
                    std::size_t batch_size = 64);

std::string eval_report_json(const EvalReport& report, const ModelConfig& model);

/// Train/val/test split with missing values filled from the training part.
Splits prepare_splits(const SensorSequence& seq, const SplitSpec& spec, std::size_t window);

/// Named size presets: "small" (D=32, H=4, 2 layers, FFN 64, batch 16, lr 1e-3)
/// and "full" (D=128, H=8, 3 layers, FFN 256, batch 64, lr 1e-4).
void apply_preset(const std::string& name, ModelConfig& model, TrainConfig& train);

/// Model shape fields taken from a sequence (classes, channels, names, rate).
void bind_to_data(ModelConfig& model, const SensorSequence& seq);

struct AblationRow {
  std::string label;  ///< "P=10" or "no-patching"
  std::size_t patch_len = 0;
  std::size_t stride = 0;
  std::size_t epochs = 0;
  double test_f1 = 0.0;
  double test_jaccard = 0.0;
  double seconds = 0.0;
};

/// Trains one model per patch size (stride = patch size) to the same epoch
/// budget, plus the P = 1, S = 1 no-patching row, and scores each on test.
std::vector<AblationRow> run_patch_ablation(const ModelConfig& base_model, const TrainConfig& base_train,
                                            const Splits& splits, const std::vector<std::size_t>& patch_sizes,
                                            const std::function<void(const AblationRow&)>& on_row = {});

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace p2lhap
