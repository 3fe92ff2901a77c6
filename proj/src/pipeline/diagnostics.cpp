#include "p2lhap/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <functional>

#include "p2lhap/objective.hpp"

namespace p2lhap {

namespace {

using Params = std::vector<TensorD>;
using Stage = std::function<Var<double>(Tape<double>&, std::span<const Var<double>> params,
                                        std::span<const Var<double>> extras)>;

struct Fixture {
  ModelConfig config;
  ParamLayout layout;
  Params params;
  PatchBatch batch;

  explicit Fixture(ForecastMode mode, std::uint64_t seed) : config(gradcheck_config(mode)), layout(config) {
    std::uint64_t s = seed * 1000;
    for (std::size_t i = 0; i < layout.count(); ++i) {
      const bool gamma = layout.names[i].ends_with(".gamma");
      TensorD t = random_tensor(layout.shapes[i], ++s, gamma ? 0.8 : -0.5, gamma ? 1.2 : 0.5);
      params.push_back(std::move(t));
    }
    SyntheticSpec spec;
    spec.classes = config.classes;
    spec.channels = config.channels;
    spec.segment_min = 3;
    spec.segment_max = 7;
    spec.segments = 12;
    spec.seed = seed;
    const SensorSequence seq = generate_synthetic(spec);
    WindowSpec w;
    w.window = config.window;
    w.step = 9;
    w.patch_len = config.patch_len;
    w.stride = config.stride;
    w.horizon = config.horizon;
    auto starts = window_starts(seq.length(), w);
    starts.resize(2);
    batch = build_batch(seq, starts, w);
  }

  std::vector<BatchNormStats<double>> norms() const {
    return std::vector<BatchNormStats<double>>(2 * config.layers, BatchNormStats<double>::identity(config.dim));
  }
};

class Suite {
 public:
  Suite(const GradSuiteOptions& options, GradSuiteReport& report) : options_(options), report_(report) {}

  void run(const std::string& group, const Fixture& fx, const std::vector<std::string>& param_names,
           const std::vector<std::pair<std::string, TensorD>>& extras, const Stage& stage) {
    std::vector<std::size_t> selected;
    for (const auto& n : param_names) selected.push_back(fx.layout.index_of(n));
    std::vector<TensorD> inputs;
    std::vector<std::string> names;
    for (const auto& [n, t] : extras) {
      inputs.push_back(t);
      names.push_back(group + "/" + n);
    }
    for (std::size_t k = 0; k < selected.size(); ++k) {
      inputs.push_back(fx.params[selected[k]]);
      names.push_back(group + "/" + param_names[k]);
    }
    const std::size_t n_extra = extras.size();
    ScalarFn fn = [&](Tape<double>& tape, std::span<const Var<double>> leaves) {
      std::vector<Var<double>> full(fx.layout.count());
      for (std::size_t i = 0; i < full.size(); ++i) {
        auto it = std::find(selected.begin(), selected.end(), i);
        full[i] = it == selected.end() ? tape.constant(fx.params[i])
                                       : leaves[n_extra + static_cast<std::size_t>(it - selected.begin())];
      }
      return stage(tape, full, leaves.first(n_extra));
    };
    GradCheckOptions o;
    o.step = options_.step;
    o.tolerance = options_.tolerance;
    o.analytic_scale = group == options_.corrupt ? options_.corrupt_scale : 1.0;
    auto entries = check_gradients(fn, inputs, names, o);
    report_.entries.insert(report_.entries.end(), entries.begin(), entries.end());
  }

 private:
  const GradSuiteOptions& options_;
  GradSuiteReport& report_;
};

std::vector<std::string> layer_params(const ParamLayout& layout, std::size_t l) {
  const std::string pre = "encoder." + std::to_string(l) + ".";
  std::vector<std::string> out;
  for (const auto& n : layout.names)
    if (n.starts_with(pre)) out.push_back(n);
  return out;
}

std::vector<std::string> with_prefix(const ParamLayout& layout, const std::string& prefix) {
  std::vector<std::string> out;
  for (const auto& n : layout.names)
    if (n.starts_with(prefix)) out.push_back(n);
  return out;
}

}  // namespace

bool GradSuiteReport::passed() const {
  return !entries.empty() && std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double GradSuiteReport::max_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.rel_error);
  return m;
}

std::vector<std::string> GradSuiteReport::groups() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    const std::string g = e.name.substr(0, e.name.find('/'));
    if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
  }
  return out;
}

double GradSuiteReport::group_max_error(const std::string& group) const {
  double m = 0.0;
  for (const auto& e : entries)
    if (e.name.substr(0, e.name.find('/')) == group) m = std::max(m, e.rel_error);
  return m;
}

std::vector<std::string> GradSuiteReport::failures() const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (!e.passed) out.push_back(e.name);
  return out;
}

std::vector<std::string> gradient_suite_groups() {
  return {"embed",         "encoder_layer",      "decoder",   "classifier_head", "forecast_head",
          "signal_head",   "loss.cross_entropy", "loss.tmse", "loss.forecast",   "loss.mse",
          "model.label",   "model.signal"};
}

ModelConfig gradcheck_config(ForecastMode mode) {
  ModelConfig c;
  c.dim = 8;
  c.heads = 2;
  c.layers = 2;
  c.ffn_dim = 16;
  c.classes = 3;
  c.channels = 2;
  c.patch_len = 4;
  c.stride = 4;
  c.window = 12;  // N = (12 - 4) / 4 + 2 = 4
  c.horizon = 2;
  c.dropout = 0.0;
  c.decoder_temperature = 1.5;
  c.mode = mode;
  return c;
}

GradSuiteReport run_gradient_suite(const GradSuiteOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  GradSuiteReport report;
  Suite suite(options, report);
  const Fixture label(ForecastMode::kLabel, options.seed);
  const Fixture signal(ForecastMode::kSignal, options.seed);
  const ModelConfig& c = label.config;
  const std::size_t b = label.batch.batch, r = b * c.channels, n = c.num_patches(), d = c.dim;
  std::uint64_t s = options.seed * 7919;
  auto rnd = [&](Shape shape, double lo = -1.0, double hi = 1.0) { return random_tensor(shape, ++s, lo, hi); };
  const TensorD patches = label.batch.patches.cast<double>();

  ForwardOptions fwd;
  fwd.norm = NormMode::kTrainFrozen;

  {
    const TensorD w = rnd({r, n, d});
    suite.run("embed", label, {"embed.wp", "embed.wpos"}, {{"patches", patches}},
              [&](Tape<double>&, std::span<const Var<double>> p, std::span<const Var<double>> x) {
                return weighted_sum(embed<double>(c, label.layout, p, x[0]), w);
              });
  }
  {
    const TensorD w = rnd({r, n, d});
    suite.run("encoder_layer", label, layer_params(label.layout, 0), {{"x", rnd({r, n, d})}},
              [&](Tape<double>&, std::span<const Var<double>> p, std::span<const Var<double>> x) {
                auto norms = label.norms();
                return weighted_sum(
                    encoder_layer<double>(c, label.layout.layers[0], p, x[0], norms[0], norms[1], fwd, nullptr), w);
              });
  }
  {
    const TensorD w = rnd({r, n, d});
    suite.run("decoder", label, {"decoder.wq", "decoder.wk", "decoder.wv"}, {{"z", rnd({r, n, d})}, {"patches", patches}},
              [&](Tape<double>&, std::span<const Var<double>> p, std::span<const Var<double>> x) {
                return weighted_sum(decode<double>(c, label.layout, p, x[0], x[1], nullptr), w);
              });
  }
  {
    const TensorD w = rnd({b, n, c.classes});
    suite.run("classifier_head", label, {"classifier.w", "classifier.b"}, {{"decoded", rnd({r, n, d})}},
              [&](Tape<double>&, std::span<const Var<double>> p, std::span<const Var<double>> x) {
                return weighted_sum(classify<double>(c, label.layout, p, x[0]), w);
              });
  }
  {
    const TensorD w = rnd({b, c.horizon, c.classes});
    suite.run("forecast_head", label, {"forecast.w", "forecast.b"}, {{"decoded", rnd({r, n, d})}},
              [&](Tape<double>&, std::span<const Var<double>> p, std::span<const Var<double>> x) {
                return weighted_sum(forecast_labels<double>(c, label.layout, p, x[0]), w);
              });
  }
  {
    const ModelConfig& sc = signal.config;
    const TensorD w = rnd({b, sc.channels, sc.horizon * sc.patch_len});
    suite.run("signal_head", signal, {"signal.w", "signal.b"}, {{"encoded", rnd({r, n, d})}},
              [&](Tape<double>&, std::span<const Var<double>> p, std::span<const Var<double>> x) {
                return weighted_sum(forecast_signal<double>(sc, signal.layout, p, x[0]), w);
              });
  }
  {
    std::vector<int> targets = label.batch.patch_labels;
    suite.run("loss.cross_entropy", label, {}, {{"logits", rnd({b, n - 1, c.classes}, -2, 2)}},
              [&](Tape<double>&, std::span<const Var<double>>, std::span<const Var<double>> x) {
                return cross_entropy(softmax(x[0], 2), targets);
              });
  }
  {
    // Spread keeps some log-ratios beyond the clip threshold.
    const TensorD logits = rnd({b, n, c.classes}, -3, 3);
    TensorD reference;
    {
      Tape<double> t;
      reference = softmax(t.constant(logits), 2).value();
    }
    suite.run("loss.tmse", label, {}, {{"logits", logits}},
              [&](Tape<double>&, std::span<const Var<double>>, std::span<const Var<double>> x) {
                return tmse_smoothing(softmax(x[0], 2), reference, kDefaultSmoothingThreshold);
              });
  }
  {
    std::vector<int> targets = label.batch.future_labels;
    suite.run("loss.forecast", label, {}, {{"logits", rnd({b, c.horizon, c.classes}, -2, 2)}},
              [&](Tape<double>&, std::span<const Var<double>>, std::span<const Var<double>> x) {
                return forecast_loss(softmax(x[0], 2), targets);
              });
  }
  {
    const TensorD target = rnd({b, c.channels, c.horizon * c.patch_len});
    suite.run("loss.mse", label, {}, {{"pred", rnd({b, c.channels, c.horizon * c.patch_len})}},
              [&](Tape<double>&, std::span<const Var<double>>, std::span<const Var<double>> x) {
                return mse_loss(x[0], target);
              });
  }
  for (const Fixture* fx : {&label, &signal}) {
    const std::string group = fx->config.mode == ForecastMode::kLabel ? "model.label" : "model.signal";
    LossFlags flags;
    // The previous-patch term of the smoothing loss is a constant; freeze it
    // at the unperturbed forward so finite differences see the same function.
    TensorD reference;
    if (fx->config.mode == ForecastMode::kLabel) {
      Tape<double> t;
      auto p = bind_params(t, fx->params, false);
      auto norms = fx->norms();
      auto res = forward<double>(fx->config, fx->layout, p, norms, t.constant(patches), fwd);
      reference = real_patch_probs(res).value();
    }
    suite.run(group, *fx, with_prefix(fx->layout, ""), {},
              [&, fx](Tape<double>& t, std::span<const Var<double>> p, std::span<const Var<double>>) {
                auto norms = fx->norms();
                auto res = forward<double>(fx->config, fx->layout, p, norms, t.constant(patches), fwd);
                return objective(fx->config, res, fx->batch, flags, reference.empty() ? nullptr : &reference).total;
              });
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace p2lhap
