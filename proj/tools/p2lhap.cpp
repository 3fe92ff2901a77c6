// p2lhap command-line tool: data generation, training, evaluation,
// segmentation, forecasting, ablation and gradient checking.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "p2lhap/data.hpp"
#include "p2lhap/diagnostics.hpp"
#include "p2lhap/metrics.hpp"
#include "p2lhap/model.hpp"
#include "p2lhap/pipeline.hpp"
#include "p2lhap/segmentation.hpp"

#ifndef P2LHAP_VERSION
#define P2LHAP_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace p2lhap;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Args {
  std::string data, descriptor, out = "run", checkpoint, preset = "small", mode, split = "test";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> patch_size, stride, window, classes, channels, dim, heads, layers, ffn, batch, epochs,
      patience, smooth_size, horizon, window_step, segments, segment_min, segment_max;
  std::optional<double> lr, tau, dropout, noise, lr_decay;
  std::optional<std::size_t> lr_step;
  std::size_t stop_after = 0;
  bool no_seg_loss = false, no_forecast_loss = false, class_balance = false, resume = false,
       no_decoder_residual = false;
  std::vector<std::size_t> patch_sizes = {1, 2, 5, 10, 20};
  std::string corrupt;
  double tolerance = 1e-3;
};

template <typename T>
void opt(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help) {
  app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

void add_data_flags(CLI::App* app, Args& a) {
  app->add_option("--data", a.data, "sensor CSV file")->required();
  app->add_option("--descriptor", a.descriptor, "format descriptor (default: data path with .fmt extension)");
}

void add_model_flags(CLI::App* app, Args& a) {
  app->add_option("--preset", a.preset, "size preset: small or full")->capture_default_str();
  app->add_option("--mode", a.mode, "label or signal");
  opt(app, "--patch-size", a.patch_size, "patch length P (default 10)");
  opt(app, "--stride", a.stride, "patch stride S (default = patch size)");
  opt(app, "--window", a.window, "window length in samples (default 200)");
  opt(app, "--dim", a.dim, "model width D");
  opt(app, "--heads", a.heads, "attention heads H");
  opt(app, "--layers", a.layers, "encoder layers");
  opt(app, "--ffn", a.ffn, "feed-forward width");
  opt(app, "--horizon", a.horizon, "forecast horizon in patches (default 8; 0 disables)");
  opt(app, "--tau", a.tau, "decoder attention temperature");
  opt(app, "--dropout", a.dropout, "dropout rate");
  app->add_flag("--no-decoder-residual", a.no_decoder_residual, "drop the residual path around cross-attention");
  opt(app, "--classes", a.classes, "expected class count (checked against the descriptor)");
  opt(app, "--channels", a.channels, "expected channel count (checked against the data)");
}

void bind_checked(const Args& a, ModelConfig& m, const SensorSequence& seq) {
  if (a.classes && *a.classes != seq.num_classes()) {
    throw DataError("--classes " + std::to_string(*a.classes) + " but the descriptor lists " +
                    std::to_string(seq.num_classes()) + " labels");
  }
  if (a.channels && *a.channels != seq.channels()) {
    throw DataError("--channels " + std::to_string(*a.channels) + " but the data has " +
                    std::to_string(seq.channels()));
  }
  bind_to_data(m, seq);
}

void add_train_flags(CLI::App* app, Args& a) {
  opt(app, "--seed", a.seed, "training seed (default 42)");
  opt(app, "--batch", a.batch, "mini-batch size");
  opt(app, "--lr", a.lr, "initial learning rate");
  opt(app, "--epochs", a.epochs, "maximum epochs (default 30)");
  opt(app, "--patience", a.patience, "early-stopping patience (default 10)");
  opt(app, "--lr-decay", a.lr_decay, "learning-rate decay factor (default 0.5)");
  opt(app, "--lr-step", a.lr_step, "epochs between decays (default 10)");
  opt(app, "--window-step", a.window_step, "offset between training windows (default = window)");
  opt(app, "--smooth-size", a.smooth_size, "smoothing window in patches (odd, default 9)");
  app->add_flag("--no-seg-loss", a.no_seg_loss, "disable the smoothing loss term");
  app->add_flag("--no-forecast-loss", a.no_forecast_loss, "disable the forecast loss term");
  app->add_flag("--class-balance", a.class_balance, "effective-number class weights");
}

ModelConfig model_config(const Args& a, TrainConfig& train) {
  ModelConfig m;
  m.horizon = 8;
  apply_preset(a.preset, m, train);
  if (!a.mode.empty()) m.mode = parse_forecast_mode(a.mode);
  if (a.patch_size) m.patch_len = *a.patch_size;
  m.stride = a.stride.value_or(m.patch_len);
  if (a.window) m.window = *a.window;
  if (a.dim) m.dim = *a.dim;
  if (a.heads) m.heads = *a.heads;
  if (a.layers) m.layers = *a.layers;
  if (a.ffn) m.ffn_dim = *a.ffn;
  if (a.horizon) m.horizon = *a.horizon;
  if (a.tau) m.decoder_temperature = *a.tau;
  if (a.dropout) m.dropout = *a.dropout;
  if (a.no_decoder_residual) m.decoder_residual = false;
  return m;
}

void apply_train_flags(const Args& a, TrainConfig& t) {
  if (a.seed) t.seed = *a.seed;
  if (a.batch) t.batch_size = *a.batch;
  if (a.lr) t.lr = *a.lr;
  if (a.epochs) t.max_epochs = *a.epochs;
  if (a.patience) t.patience = *a.patience;
  if (a.lr_decay) t.lr_decay = *a.lr_decay;
  if (a.lr_step) t.lr_step_epochs = *a.lr_step;
  if (a.window_step) t.window_step = *a.window_step;
  if (a.smooth_size) t.smooth_size = *a.smooth_size;
  t.segmentation_loss = !a.no_seg_loss;
  t.forecast_loss = !a.no_forecast_loss;
  t.class_balance = a.class_balance;
}

fs::path descriptor_path(const Args& a) {
  if (!a.descriptor.empty()) return a.descriptor;
  fs::path p = a.data;
  p.replace_extension(".fmt");
  if (!fs::exists(p)) throw UsageError("no --descriptor given and " + p.string() + " does not exist");
  return p;
}

SensorSequence load_data(const Args& a, MissingValues missing) {
  return load_csv(a.data, FormatDescriptor::load(descriptor_path(a)), missing);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

fs::path prepare_out(const Args& a) {
  fs::path out = a.out;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw DataError("cannot create output directory " + out.string());
  return out;
}

void write_resolved(const fs::path& out, const std::string& command, ordered_json body) {
  ordered_json j;
  j["version"] = P2LHAP_VERSION;
  j["command"] = command;
  for (auto& [k, v] : body.items()) j[k] = v;
  write_text(out / "resolved_config.json", j.dump(2) + "\n");
}

ordered_json parsed(const std::string& s) { return ordered_json::parse(s); }

// Rows of `seq` selected by --split; "all" uses the whole file.
SensorSequence select_split(const Args& a, const ModelConfig& m) {
  if (a.split == "all") return load_data(a, MissingValues::kColumnMean);
  const SensorSequence seq = load_data(a, MissingValues::kKeep);
  const Splits s = prepare_splits(seq, SplitSpec{}, m.window + m.horizon * m.patch_len);
  if (a.split == "train") return s.train;
  if (a.split == "val") return s.val;
  if (a.split == "test") return s.test;
  throw UsageError("unknown split '" + a.split + "' (expected all, train, val or test)");
}

// ---------------------------------------------------------------------------

int cmd_generate(const Args& a) {
  SyntheticSpec spec;
  if (a.classes) spec.classes = *a.classes;
  if (a.channels) spec.channels = *a.channels;
  if (a.segments) spec.segments = *a.segments;
  if (a.segment_min) spec.segment_min = *a.segment_min;
  if (a.segment_max) spec.segment_max = *a.segment_max;
  if (a.seed) spec.seed = *a.seed;
  if (a.noise) spec.noise_sigma = *a.noise;
  if (spec.classes < 2) throw UsageError("--classes must be at least 2");
  if (spec.channels < 1) throw UsageError("--channels must be at least 1");
  if (spec.segments < 1) throw UsageError("--segments must be at least 1");
  if (spec.segment_min < 1 || spec.segment_max < spec.segment_min) {
    throw UsageError("segment lengths need 1 <= --segment-min <= --segment-max");
  }
  const fs::path out = prepare_out(a);
  ordered_json gen{{"classes", spec.classes},           {"channels", spec.channels},
                   {"segments", spec.segments},         {"segment_min", spec.segment_min},
                   {"segment_max", spec.segment_max},   {"seed", spec.seed},
                   {"noise_sigma", spec.noise_sigma},   {"sample_rate_hz", spec.sample_rate_hz},
                   {"routine_probability", spec.routine_probability}};
  write_resolved(out, "generate", {{"out", out.string()}, {"generator", gen}});
  const SensorSequence seq = generate_synthetic(spec);
  write_csv(seq, out / "synthetic.csv");
  write_text(out / "synthetic.fmt", synthetic_descriptor(seq).serialize());
  ordered_json manifest{{"version", P2LHAP_VERSION}, {"generator", gen},
                        {"samples", seq.length()},   {"files", {"synthetic.csv", "synthetic.fmt"}}};
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  std::printf("wrote %zu samples to %s\n", seq.length(), (out / "synthetic.csv").c_str());
  return kOk;
}

int cmd_train(const Args& a) {
  TrainConfig train;
  ModelConfig model = model_config(a, train);
  apply_train_flags(a, train);
  if (train.window_step == 0) train.window_step = model.window;
  const fs::path out = prepare_out(a);

  const SensorSequence seq = load_data(a, MissingValues::kKeep);
  bind_checked(a, model, seq);
  model.validate();
  train.validate();
  write_resolved(out, "train",
                 {{"data", a.data},
                  {"descriptor", descriptor_path(a).string()},
                  {"out", out.string()},
                  {"preset", a.preset},
                  {"split", {{"train", 0.7}, {"val", 0.1}, {"test", 0.2}}},
                  {"model", parsed(config_to_json(model))},
                  {"train", parsed(train_config_to_json(train))}});

  const Splits splits = prepare_splits(seq, SplitSpec{}, model.window + model.horizon * model.patch_len);
  const fs::path state_path = out / "train_state.p2ts";
  std::optional<Trainer> trainer;
  if (a.resume) {
    if (!fs::exists(state_path)) throw UsageError("--resume given but " + state_path.string() + " does not exist");
    trainer.emplace(model, train, splits.train, splits.val, load_train_state(state_path, model, train));
    std::printf("resuming after epoch %zu\n", trainer->state().epoch);
  } else {
    trainer.emplace(model, train, splits.train, splits.val);
  }
  std::printf("model: %zu parameters, N=%zu patches per window\n", Model(model, 0).parameter_count(),
              model.num_patches());

  auto write_history = [&] {
    std::string text;
    for (const auto& r : trainer->state().history) text += history_line(r) + "\n";
    write_text(out / "history.jsonl", text);
  };
  write_history();
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t ran = 0;
  auto report = [&](const EpochRecord& r) {
    save_train_state(state_path, trainer->state(), model, train);
    write_history();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r.val_mse) {
      std::printf("epoch %3zu  lr %.2e  loss %.5f  val_mse %.5f  (%.1fs)\n", r.epoch, r.lr, r.loss.l_total,
                  *r.val_mse, secs);
    } else {
      std::printf("epoch %3zu  lr %.2e  loss %.5f (cls %.4f seg %.4f pre %.4f)  val_f1 %.4f  (%.1fs)\n", r.epoch,
                  r.lr, r.loss.l_total, r.loss.l_cls, r.loss.l_seg, r.loss.l_pre, r.val_f1, secs);
    }
    std::fflush(stdout);
  };
  while (!trainer->finished() && (a.stop_after == 0 || ran < a.stop_after)) {
    report(trainer->run_epoch());
    ++ran;
  }
  save_checkpoint(trainer->best_model(), out / "model_best.p2lh");
  save_checkpoint(trainer->current_model(), out / "model_final.p2lh");
  if (!trainer->finished()) {
    std::printf("stopped after epoch %zu; continue with --resume\n", trainer->state().epoch);
    return kOk;
  }

  const EvalReport rep = evaluate(trainer->best_model(), splits.test, train.smooth_size, train.batch_size);
  write_text(out / "eval_test.json", eval_report_json(rep, model) + "\n");
  if (model.mode == ForecastMode::kLabel) {
    std::printf("best epoch %zu; test weighted F1 %.4f (smoothed %.4f)\n", trainer->state().best_epoch,
                rep.raw.weighted_f1, rep.smoothed.weighted_f1);
  } else {
    std::printf("best epoch %zu; test MSE %.5f (persistence %.5f)\n", trainer->state().best_epoch,
                rep.signal_forecast->model_mse, rep.signal_forecast->persistence_mse);
  }
  return kOk;
}

struct Loaded {
  Model model;
  SensorSequence data;
  fs::path out;
};

Loaded load_for_inference(const Args& a, const std::string& command) {
  if (a.checkpoint.empty()) throw UsageError("--checkpoint is required");
  Model model = load_checkpoint(a.checkpoint);
  const fs::path out = prepare_out(a);
  write_resolved(out, command,
                 {{"data", a.data},
                  {"descriptor", descriptor_path(a).string()},
                  {"checkpoint", a.checkpoint},
                  {"split", a.split},
                  {"smooth_size", a.smooth_size.value_or(kDefaultSmoothSize)},
                  {"out", out.string()},
                  {"model", parsed(config_to_json(model.config()))}});
  SensorSequence data = select_split(a, model.config());
  check_vocabulary(model.config(), data);
  return {std::move(model), std::move(data), out};
}

int cmd_eval(const Args& a) {
  auto [model, data, out] = load_for_inference(a, "eval");
  const EvalReport rep = evaluate(model, data, a.smooth_size.value_or(kDefaultSmoothSize));
  write_text(out / "eval.json", eval_report_json(rep, model.config()) + "\n");
  if (model.config().mode == ForecastMode::kLabel) {
    write_confusion_csv(rep.raw.confusion, model.config().class_names, out / "confusion.csv");
    write_confusion_csv(rep.smoothed.confusion, model.config().class_names, out / "confusion_smoothed.csv");
    std::printf("weighted F1 %.4f  jaccard %.4f  (smoothed: F1 %.4f  jaccard %.4f)\n", rep.raw.weighted_f1,
                rep.raw.jaccard, rep.smoothed.weighted_f1, rep.smoothed.jaccard);
  } else {
    std::printf("signal MSE %.5f  (persistence %.5f)\n", rep.signal_forecast->model_mse,
                rep.signal_forecast->persistence_mse);
  }
  return kOk;
}

int cmd_segment(const Args& a) {
  auto [model, data, out] = load_for_inference(a, "segment");
  const ModelConfig& cfg = model.config();
  if (cfg.mode != ForecastMode::kLabel) throw UsageError("segment needs a label-mode checkpoint");
  const std::size_t k = a.smooth_size.value_or(kDefaultSmoothSize);
  const PatchPredictions p = predict_patches(model, data);
  const std::vector<int> smoothed = smooth(p.pred, k);
  const SegmentTiming timing{cfg.patch_len, cfg.stride, cfg.sample_rate_hz};
  write_segments_csv(out / "segments_raw.csv", extract_segments(p.pred), timing, cfg.class_names);
  write_segments_csv(out / "segments_smoothed.csv", extract_segments(smoothed), timing, cfg.class_names);
  write_segments_csv(out / "segments_truth.csv", extract_segments(p.truth), timing, cfg.class_names);
  std::string dump = "patch,start_time_s,truth,raw,smoothed\n";
  char buf[128];
  for (std::size_t i = 0; i < p.pred.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.3f,%d,%d,%d\n", i,
                  static_cast<double>(i * cfg.stride) / cfg.sample_rate_hz, p.truth[i], p.pred[i], smoothed[i]);
    dump += buf;
  }
  write_text(out / "patches.csv", dump);
  std::printf("%zu patches: %zu raw segments, %zu after smoothing (window %zu), %zu true segments\n",
              p.pred.size(), extract_segments(p.pred).size(), extract_segments(smoothed).size(), k,
              extract_segments(p.truth).size());
  return kOk;
}

int cmd_forecast(const Args& a) {
  if (a.mode.empty()) throw UsageError("--mode label|signal is required for forecast");
  const ForecastMode want = parse_forecast_mode(a.mode);
  auto [model, data, out] = load_for_inference(a, "forecast");
  const ModelConfig& cfg = model.config();
  if (cfg.mode != want) {
    throw UsageError("checkpoint is a " + to_string(cfg.mode) + "-mode model; cannot run a " + to_string(want) +
                     " forecast");
  }
  if (cfg.horizon == 0) throw UsageError("checkpoint has no forecast horizon");
  const WindowSet set = make_window_set(data, cfg, cfg.window, true);
  ordered_json j;
  j["mode"] = to_string(cfg.mode);
  j["horizon"] = cfg.horizon;
  j["windows"] = ordered_json::array();

  if (cfg.mode == ForecastMode::kLabel) {
    const LabelForecastReport rep = evaluate_label_forecast(model, data, cfg.window);
    for (std::size_t start : set.starts) {
      const std::size_t one[] = {start};
      const PatchBatch batch = build_batch(data, one, set.spec);
      Tape<float> tape;
      const auto pred = argmax_last(infer(model, tape, batch.patches).forecast_probs.value());
      ordered_json w{{"start", start}, {"predicted", ordered_json::array()}, {"truth", ordered_json::array()}};
      for (std::size_t t = 0; t < cfg.horizon; ++t) {
        w["predicted"].push_back(cfg.class_names.empty() ? std::to_string(pred[t]) : cfg.class_names[pred[t]]);
        const int y = batch.future_labels[t];
        w["truth"].push_back(cfg.class_names.empty() ? std::to_string(y) : cfg.class_names[y]);
      }
      j["windows"].push_back(w);
    }
    j["model_accuracy"] = rep.model_accuracy;
    j["persistence_accuracy"] = rep.persistence_accuracy;
    std::printf("label forecast accuracy %.4f  (persistence %.4f) over %zu windows\n", rep.model_accuracy,
                rep.persistence_accuracy, rep.windows);
  } else {
    const SignalForecastReport rep = evaluate_signal_forecast(model, data, cfg.window);
    std::string series = "window,start,channel,step,predicted,truth\n";
    char buf[160];
    const std::size_t span = cfg.horizon * cfg.patch_len;
    for (std::size_t w = 0; w < set.starts.size(); ++w) {
      const std::size_t one[] = {set.starts[w]};
      const PatchBatch batch = build_batch(data, one, set.spec);
      Tape<float> tape;
      const Tensor pred = denormalize_future(infer(model, tape, batch.patches).signal.value(), batch);
      for (std::size_t c = 0; c < cfg.channels; ++c)
        for (std::size_t t = 0; t < span; ++t) {
          std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%zu,%.6g,%.6g\n", w, set.starts[w], c, t, pred[c * span + t],
                        batch.future_signal[c * span + t]);
          series += buf;
        }
      j["windows"].push_back({{"start", set.starts[w]}});
    }
    write_text(out / "forecast_series.csv", series);
    j["model_mse"] = rep.model_mse;
    j["persistence_mse"] = rep.persistence_mse;
    std::printf("signal forecast MSE %.5f  (persistence %.5f) over %zu windows\n", rep.model_mse,
                rep.persistence_mse, rep.windows);
  }
  write_text(out / "forecast.json", j.dump(2) + "\n");
  return kOk;
}

int cmd_ablate(const Args& a) {
  TrainConfig train;
  ModelConfig model = model_config(a, train);
  apply_train_flags(a, train);
  if (a.patch_size || a.stride) throw UsageError("ablate sweeps --patch-sizes; do not pass --patch-size/--stride");
  if (a.mode == "signal") throw UsageError("ablate runs in label mode");
  model.mode = ForecastMode::kLabel;
  const fs::path out = prepare_out(a);
  const SensorSequence seq = load_data(a, MissingValues::kKeep);
  bind_checked(a, model, seq);
  std::size_t max_p = 1;
  for (std::size_t p : a.patch_sizes) max_p = std::max(max_p, p);
  for (std::size_t p : a.patch_sizes) {
    ModelConfig probe = model;
    probe.patch_len = probe.stride = p;
    probe.validate();
  }
  train.validate();
  write_resolved(out, "ablate",
                 {{"data", a.data},
                  {"descriptor", descriptor_path(a).string()},
                  {"out", out.string()},
                  {"preset", a.preset},
                  {"patch_sizes", a.patch_sizes},
                  {"model", parsed(config_to_json(model))},
                  {"train", parsed(train_config_to_json(train))}});
  const Splits splits = prepare_splits(seq, SplitSpec{}, model.window + model.horizon * max_p);
  const auto rows = run_patch_ablation(model, train, splits, a.patch_sizes, [](const AblationRow& r) {
    std::printf("%-12s P=%-3zu S=%-3zu epochs %-3zu test F1 %.4f  jaccard %.4f  (%.1fs)\n", r.label.c_str(),
                r.patch_len, r.stride, r.epochs, r.test_f1, r.test_jaccard, r.seconds);
    std::fflush(stdout);
  });
  write_text(out / "ablation.csv", ablation_csv(rows));
  return kOk;
}

int cmd_gradcheck(const Args& a) {
  GradSuiteOptions options;
  options.tolerance = a.tolerance;
  options.corrupt = a.corrupt;
  if (a.seed) options.seed = *a.seed;
  if (!options.corrupt.empty()) {
    const auto groups = gradient_suite_groups();
    if (std::find(groups.begin(), groups.end(), options.corrupt) == groups.end()) {
      std::string all;
      for (const auto& g : groups) all += (all.empty() ? "" : ", ") + g;
      throw UsageError("unknown group '" + options.corrupt + "'; groups: " + all);
    }
  }
  std::optional<fs::path> out;
  if (!a.out.empty() && a.out != "run") {
    out = prepare_out(a);
    write_resolved(*out, "gradcheck",
                   {{"tolerance", options.tolerance},
                    {"step", options.step},
                    {"seed", options.seed},
                    {"corrupt", options.corrupt}});
  }
  const GradSuiteReport rep = run_gradient_suite(options);
  ordered_json groups = ordered_json::array();
  std::printf("%-18s %12s  %s\n", "group", "max_rel_err", "status");
  for (const auto& g : rep.groups()) {
    const double e = rep.group_max_error(g);
    const bool ok = e < options.tolerance;
    std::printf("%-18s %12.3e  %s\n", g.c_str(), e, ok ? "ok" : "FAIL");
    groups.push_back({{"group", g}, {"max_rel_error", e}, {"passed", ok}});
  }
  if (out) {
    ordered_json entries = ordered_json::array();
    for (const auto& e : rep.entries) {
      entries.push_back({{"name", e.name}, {"elements", e.elements}, {"rel_error", e.rel_error}, {"passed", e.passed}});
    }
    ordered_json j{{"passed", rep.passed()}, {"seconds", rep.seconds}, {"groups", groups}, {"entries", entries}};
    write_text(*out / "gradcheck.json", j.dump(2) + "\n");
  }
  std::printf("%zu checks in %.2fs, max relative error %.3e\n", rep.entries.size(), rep.seconds, rep.max_error());
  if (!rep.passed()) {
    for (const auto& f : rep.failures()) std::fprintf(stderr, "gradient check failed: %s\n", f.c_str());
    return kNumerical;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"P2LHAP patch-to-label activity recognition, segmentation and forecasting"};
  app.set_version_flag("--version", P2LHAP_VERSION);
  app.set_config("--config", "", "INI/TOML file with flag values; command-line flags override it");
  app.require_subcommand(1);
  Args a;

  auto* gen = app.add_subcommand("generate", "write a seeded synthetic dataset");
  gen->add_option("--out", a.out, "output directory")->capture_default_str();
  opt(gen, "--classes", a.classes, "activity classes (default 4)");
  opt(gen, "--channels", a.channels, "sensor channels (default 3)");
  opt(gen, "--segments", a.segments, "activity segments (default 60)");
  opt(gen, "--segment-min", a.segment_min, "shortest segment in samples (default 100)");
  opt(gen, "--segment-max", a.segment_max, "longest segment in samples (default 300)");
  opt(gen, "--seed", a.seed, "generator seed (default 7)");
  opt(gen, "--noise", a.noise, "gaussian noise sigma (default 0.1)");

  auto* train = app.add_subcommand("train", "train a model on the 70/10/20 sequential split");
  add_data_flags(train, a);
  train->add_option("--out", a.out, "output directory")->capture_default_str();
  add_model_flags(train, a);
  add_train_flags(train, a);
  train->add_flag("--resume", a.resume, "continue from <out>/train_state.p2ts");
  train->add_option("--stop-after", a.stop_after, "leave the run unfinished after this many epochs (0: run to the end)");

  auto add_inference = [&](CLI::App* cmd) {
    add_data_flags(cmd, a);
    cmd->add_option("--checkpoint", a.checkpoint, "model checkpoint")->required();
    cmd->add_option("--out", a.out, "output directory")->capture_default_str();
    cmd->add_option("--split", a.split, "all, train, val or test")->capture_default_str();
    opt(cmd, "--smooth-size", a.smooth_size, "smoothing window in patches (odd, default 9)");
  };
  auto* eval = app.add_subcommand("eval", "metrics before and after smoothing");
  add_inference(eval);
  auto* seg = app.add_subcommand("segment", "segment CSVs and a per-patch label dump");
  add_inference(seg);
  auto* fc = app.add_subcommand("forecast", "future labels or future signal");
  add_inference(fc);
  fc->add_option("--mode", a.mode, "label or signal")->required();

  auto* abl = app.add_subcommand("ablate", "patch-size sweep plus the no-patching run");
  add_data_flags(abl, a);
  abl->add_option("--out", a.out, "output directory")->capture_default_str();
  add_model_flags(abl, a);
  add_train_flags(abl, a);
  abl->add_option("--patch-sizes", a.patch_sizes, "patch sizes to sweep")->delimiter(',')->capture_default_str();
  // ablation flags that make no sense per run
  abl->remove_option(abl->get_option("--mode"));
  abl->add_option("--mode", a.mode, "must be label");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every layer and loss");
  gc->add_option("--out", a.out, "directory for gradcheck.json (optional)");
  gc->add_option("--corrupt", a.corrupt, "scale one group's analytic gradient (negative control)");
  gc->add_option("--tolerance", a.tolerance, "maximum relative error")->capture_default_str();
  opt(gc, "--seed", a.seed, "fixture seed (default 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_generate(a);
    if (*train) return cmd_train(a);
    if (*eval) return cmd_eval(a);
    if (*seg) return cmd_segment(a);
    if (*fc) return cmd_forecast(a);
    if (*abl) return cmd_ablate(a);
    if (*gc) return cmd_gradcheck(a);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
  return kUsage;
}
