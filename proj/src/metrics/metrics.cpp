#include "p2lhap/metrics.hpp"

#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace p2lhap {

namespace {

void check_inputs(std::span<const int> preds, std::span<const int> truths, std::size_t classes) {
  if (preds.size() != truths.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(preds.size()) + " predictions vs " +
                                std::to_string(truths.size()) + " labels");
  }
  auto check = [classes](int v) {
    if (v < 0 || static_cast<std::size_t>(v) >= classes) {
      throw std::invalid_argument("metrics: class id " + std::to_string(v) + " outside [0, " +
                                  std::to_string(classes) + ")");
    }
  };
  for (int v : preds) check(v);
  for (int v : truths) check(v);
}

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

std::vector<ClassScores> class_scores(const ConfusionMatrix& cm) {
  std::vector<ClassScores> out(cm.classes);
  for (std::size_t c = 0; c < cm.classes; ++c) {
    std::uint64_t tp = cm.at(c, c), true_count = 0, pred_count = 0;
    for (std::size_t k = 0; k < cm.classes; ++k) {
      true_count += cm.at(c, k);
      pred_count += cm.at(k, c);
    }
    ClassScores& s = out[c];
    s.support = true_count;
    s.precision = ratio(static_cast<double>(tp), static_cast<double>(pred_count));
    s.recall = ratio(static_cast<double>(tp), static_cast<double>(true_count));
    s.f1 = ratio(2.0 * static_cast<double>(tp), static_cast<double>(true_count + pred_count));
  }
  return out;
}

}  // namespace

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t c = 0; c < classes; ++c) t += at(c, c);
  return t;
}

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> truths, std::size_t classes) {
  check_inputs(preds, truths, classes);
  ConfusionMatrix cm{classes, std::vector<std::uint64_t>(classes * classes, 0)};
  for (std::size_t i = 0; i < preds.size(); ++i)
    ++cm.counts[static_cast<std::size_t>(truths[i]) * classes + static_cast<std::size_t>(preds[i])];
  return cm;
}

Accuracy accuracy(std::span<const int> preds, std::span<const int> truths, std::size_t classes) {
  const ConfusionMatrix cm = confusion_matrix(preds, truths, classes);
  const double n = static_cast<double>(cm.total());
  Accuracy a;
  if (n == 0) return a;
  a.plain = static_cast<double>(cm.trace()) / n;
  // Each sample is TP or TN for every class except its true and predicted
  // class when those differ, so sum_c (TP_c + TN_c) = C*n - 2*(n - trace).
  double correct = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::uint64_t tp = cm.at(c, c), row = 0, col = 0;
    for (std::size_t k = 0; k < classes; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    const std::uint64_t tn = cm.total() - row - col + tp;
    correct += static_cast<double>(tp + tn);
  }
  a.one_vs_rest = correct / (static_cast<double>(classes) * n);
  return a;
}

double weighted_f1(std::span<const int> preds, std::span<const int> truths, std::size_t classes) {
  const ConfusionMatrix cm = confusion_matrix(preds, truths, classes);
  const double n = static_cast<double>(cm.total());
  if (n == 0) return 0.0;
  double total = 0.0;
  for (const auto& s : class_scores(cm)) total += static_cast<double>(s.support) / n * s.f1;
  return total;
}

std::vector<std::optional<double>> class_jaccard(std::span<const int> preds, std::span<const int> truths,
                                                 std::size_t classes) {
  check_inputs(preds, truths, classes);
  std::vector<std::uint64_t> inter(classes, 0), uni(classes, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto p = static_cast<std::size_t>(preds[i]), t = static_cast<std::size_t>(truths[i]);
    ++uni[p];
    if (p == t) {
      ++inter[p];
    } else {
      ++uni[t];
    }
  }
  std::vector<std::optional<double>> out(classes);
  for (std::size_t c = 0; c < classes; ++c)
    if (uni[c] > 0) out[c] = static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
  return out;
}

double jaccard(std::span<const int> preds, std::span<const int> truths, std::size_t classes) {
  double total = 0.0;
  std::size_t present = 0;
  for (const auto& iou : class_jaccard(preds, truths, classes)) {
    if (!iou) continue;
    total += *iou;
    ++present;
  }
  return present ? total / static_cast<double>(present) : 0.0;
}

double forecast_mse(std::span<const float> pred, std::span<const float> truth) {
  if (pred.size() != truth.size()) {
    throw std::invalid_argument("forecast_mse: " + std::to_string(pred.size()) + " predictions vs " +
                                std::to_string(truth.size()) + " targets");
  }
  if (pred.empty()) throw std::invalid_argument("forecast_mse: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(truth[i]);
    total += d * d;
  }
  return total / static_cast<double>(pred.size());
}

MetricsReport compute_metrics(std::span<const int> preds, std::span<const int> truths, std::size_t classes) {
  MetricsReport r;
  r.confusion = confusion_matrix(preds, truths, classes);
  const Accuracy a = accuracy(preds, truths, classes);
  r.accuracy_plain = a.plain;
  r.accuracy_one_vs_rest = a.one_vs_rest;
  r.weighted_f1 = weighted_f1(preds, truths, classes);
  r.jaccard = jaccard(preds, truths, classes);
  r.per_class = class_scores(r.confusion);
  return r;
}

std::string metrics_json(const MetricsReport& r, std::span<const std::string> class_names) {
  nlohmann::ordered_json j;
  j["accuracy_plain"] = r.accuracy_plain;
  j["accuracy_one_vs_rest"] = r.accuracy_one_vs_rest;
  j["weighted_f1"] = r.weighted_f1;
  j["jaccard"] = r.jaccard;
  if (r.mse) j["mse"] = *r.mse;
  j["patches"] = r.confusion.total();
  auto& per = j["per_class"] = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& s = r.per_class[c];
    per.push_back({{"class", c < class_names.size() ? class_names[c] : std::to_string(c)},
                   {"precision", s.precision},
                   {"recall", s.recall},
                   {"f1", s.f1},
                   {"support", s.support}});
  }
  return j.dump(2);
}

void write_confusion_csv(const ConfusionMatrix& cm, std::span<const std::string> class_names,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  auto name = [&](std::size_t c) { return c < class_names.size() ? class_names[c] : std::to_string(c); };
  out << "true\\pred";
  for (std::size_t c = 0; c < cm.classes; ++c) out << ',' << name(c);
  out << '\n';
  for (std::size_t t = 0; t < cm.classes; ++t) {
    out << name(t);
    for (std::size_t p = 0; p < cm.classes; ++p) out << ',' << cm.at(t, p);
    out << '\n';
  }
}

}  // namespace p2lhap
