#include "p2lhap/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "p2lhap/random.hpp"

namespace p2lhap {

double norm_relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), floor});
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff) / denom;
}

std::vector<GradCheckEntry> check_gradients(const ScalarFn& fn, const std::vector<TensorD>& inputs,
                                            const std::vector<std::string>& names,
                                            const GradCheckOptions& options) {
  std::vector<TensorD> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (const auto& in : inputs) leaves.push_back(tape.leaf(in, true));
    Var<double> out = fn(tape, leaves);
    tape.backward(out);
    for (const auto& leaf : leaves) analytic.push_back(tape.grad(leaf));
  }

  auto evaluate = [&](const std::vector<TensorD>& values) {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (const auto& v : values) leaves.push_back(tape.constant(v));
    return fn(tape, leaves).value()[0];
  };

  std::vector<GradCheckEntry> report;
  std::vector<TensorD> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<double> numeric(inputs[i].size());
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double orig = probe[i][j];
      probe[i][j] = orig + options.step;
      const double up = evaluate(probe);
      probe[i][j] = orig - options.step;
      const double down = evaluate(probe);
      probe[i][j] = orig;
      numeric[j] = (up - down) / (2.0 * options.step);
    }
    std::vector<double> a(analytic[i].data().begin(), analytic[i].data().end());
    for (double& v : a) v *= options.analytic_scale;
    GradCheckEntry e;
    e.name = i < names.size() ? names[i] : "input" + std::to_string(i);
    e.elements = inputs[i].size();
    e.rel_error = norm_relative_error(a, numeric, options.norm_floor);
    e.passed = e.rel_error < options.tolerance;
    report.push_back(std::move(e));
  }
  return report;
}

TensorD random_tensor(const Shape& shape, std::uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  TensorD t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace p2lhap
