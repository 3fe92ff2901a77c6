#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "p2lhap/gradcheck.hpp"
#include "p2lhap/model.hpp"

namespace p2lhap {

struct GradSuiteOptions {
  double step = 1e-6;
  double tolerance = 1e-3;
  std::uint64_t seed = 1;
  /// Group whose analytic gradient is scaled by corrupt_scale (negative control).
  std::string corrupt;
  double corrupt_scale = 1.5;
};

struct GradSuiteReport {
  /// Entry names are "<group>/<input>".
  std::vector<GradCheckEntry> entries;
  double seconds = 0.0;

  bool passed() const;
  double max_error() const;
  std::vector<std::string> groups() const;
  double group_max_error(const std::string& group) const;
  std::vector<std::string> failures() const;
};

/// Group names checked by run_gradient_suite, in order.
std::vector<std::string> gradient_suite_groups();

/// Tiny float64 configuration used by the finite-difference suite
/// (D = 8, H = 2, N = 4, P = 4).
ModelConfig gradcheck_config(ForecastMode mode);

/// Central-difference check of every stage, head and loss, plus the full
/// objective with respect to every parameter.
GradSuiteReport run_gradient_suite(const GradSuiteOptions& options = {});

}  // namespace p2lhap
