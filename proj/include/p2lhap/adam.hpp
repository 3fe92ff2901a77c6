#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "p2lhap/tensor.hpp"

namespace p2lhap {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moments per parameter, congruent with the parameter list
/// they were created for.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  static AdamState for_params(std::span<const Tensor> params, AdamConfig config = {});
};

/// One bias-corrected Adam update. Throws NumericalError naming the first
/// parameter whose gradient is not finite; nothing is modified in that case.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               std::span<const std::string> names = {});

}  // namespace p2lhap
