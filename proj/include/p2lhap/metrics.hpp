#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace p2lhap {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::uint64_t> counts;

  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * classes + pred]; }
  std::uint64_t total() const;
  std::uint64_t trace() const;
};

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> truths, std::size_t classes);

struct Accuracy {
  double plain = 0.0;
  /// sum_c (TP_c + TN_c) / sum_c (TP_c + TN_c + FP_c + FN_c), one-vs-rest counts
  double one_vs_rest = 0.0;
};

Accuracy accuracy(std::span<const int> preds, std::span<const int> truths, std::size_t classes);

/// sum_c (n_c / n) * F1_c with n_c the true count of class c.
double weighted_f1(std::span<const int> preds, std::span<const int> truths, std::size_t classes);

/// Framewise IoU per class present in either sequence, averaged over those classes.
double jaccard(std::span<const int> preds, std::span<const int> truths, std::size_t classes);
/// Per-class framewise IoU; empty for classes absent from both sequences.
std::vector<std::optional<double>> class_jaccard(std::span<const int> preds, std::span<const int> truths,
                                                 std::size_t classes);

double forecast_mse(std::span<const float> pred, std::span<const float> truth);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct MetricsReport {
  double accuracy_plain = 0.0;
  double accuracy_one_vs_rest = 0.0;
  double weighted_f1 = 0.0;
  double jaccard = 0.0;
  std::optional<double> mse;
  std::vector<ClassScores> per_class;
  ConfusionMatrix confusion;
};

/// Throws std::invalid_argument on length mismatch or out-of-range ids.
MetricsReport compute_metrics(std::span<const int> preds, std::span<const int> truths, std::size_t classes);

std::string metrics_json(const MetricsReport& report, std::span<const std::string> class_names);
void write_confusion_csv(const ConfusionMatrix& cm, std::span<const std::string> class_names,
                         const std::filesystem::path& path);

}  // namespace p2lhap
