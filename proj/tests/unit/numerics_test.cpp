#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "p2lhap/adam.hpp"
#include "p2lhap/gradcheck.hpp"
#include "p2lhap/ops.hpp"
#include "p2lhap/random.hpp"

using namespace p2lhap;

namespace {

Tensor matrix(std::size_t rows, std::size_t cols, std::vector<float> values) {
  return Tensor({rows, cols}, std::move(values));
}

// Checks every input of `fn` against central differences at float64.
void expect_gradients_match(const ScalarFn& fn, const std::vector<TensorD>& inputs, double tol = 1e-4) {
  auto report = check_gradients(fn, inputs, {}, GradCheckOptions{1e-6, tol, 1.0});
  for (const auto& e : report) {
    EXPECT_TRUE(e.passed) << e.name << " rel err " << e.rel_error;
  }
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tape<float> tape;
  auto eye = tape.constant(matrix(2, 2, {1, 0, 0, 1}));
  auto m = tape.constant(matrix(2, 2, {1, 2, 3, 4}));
  auto out = matmul(eye, m);
  EXPECT_EQ(out.value(), matrix(2, 2, {1, 2, 3, 4}));
}

TEST(Matmul, OrthogonalRowsGiveZero) {
  Tape<float> tape;
  auto out = matmul(tape.constant(matrix(1, 2, {1, 0})), tape.constant(matrix(2, 1, {0, 1})));
  EXPECT_EQ(out.value(), matrix(1, 1, {0}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape<float> tape;
  auto a = tape.constant(Tensor({2, 3}));
  auto b = tape.constant(Tensor({2, 2}));
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2x2]"), std::string::npos) << msg;
  }
}

TEST(Matmul, SumGradientMatchesFiniteDifferences) {
  auto fn = [](Tape<double>&, std::span<const Var<double>> in) { return sum(matmul(in[0], in[1])); };
  expect_gradients_match(fn, {random_tensor({3, 4}, 1), random_tensor({4, 2}, 2)});
}

TEST(Softmax, SymmetricInputIsUniform) {
  Tape<float> tape;
  auto y = softmax(tape.constant(Tensor({2}, {0.f, 0.f})), 0);
  EXPECT_FLOAT_EQ(y.value()[0], 0.5f);
  EXPECT_FLOAT_EQ(y.value()[1], 0.5f);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  Tape<float> tape;
  auto y = softmax(tape.constant(Tensor({2}, {1000.f, 0.f})), 0);
  EXPECT_FLOAT_EQ(y.value()[0], 1.0f);
  EXPECT_FLOAT_EQ(y.value()[1], 0.0f);
}

TEST(Softmax, LogInputsRecoverProportions) {
  Tape<double> tape;
  auto y = softmax(tape.constant(TensorD({3}, {std::log(1.0), std::log(2.0), std::log(3.0)})), 0);
  EXPECT_NEAR(y.value()[0], 1.0 / 6.0, 1e-12);
  EXPECT_NEAR(y.value()[1], 2.0 / 6.0, 1e-12);
  EXPECT_NEAR(y.value()[2], 3.0 / 6.0, 1e-12);
}

TEST(Softmax, RowsSumToOneAlongAnyAxis) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x({3, 4, 5});
    const double spread = trial % 2 ? 1.0 : 80.0;
    for (auto& v : x.data()) v = static_cast<float>(rng.uniform(-spread, spread));
    for (std::size_t axis = 0; axis < 3; ++axis) {
      Tape<float> tape;
      auto y = softmax(tape.constant(x), axis);
      const auto& s = x.shape();
      std::size_t inner = 1;
      for (std::size_t d = axis + 1; d < 3; ++d) inner *= s[d];
      const std::size_t len = s[axis];
      for (std::size_t start = 0; start < x.size(); ++start) {
        if ((start / inner) % len != 0) continue;
        double total = 0;
        for (std::size_t j = 0; j < len; ++j) total += y.value()[start + j * inner];
        EXPECT_NEAR(total, 1.0, 1e-6);
      }
    }
  }
}

TEST(BatchNorm, ConstantInputNormalizesToZero) {
  Tape<float> tape;
  auto stats = BatchNormStats<float>::identity(2);
  auto x = tape.constant(Tensor({3, 2}, 7.f));
  auto y = batchnorm(x, tape.constant(Tensor({2}, 1.f)), tape.constant(Tensor({2}, 0.f)), stats,
                     NormMode::kTrain, 1);
  for (float v : y.value().data()) EXPECT_FLOAT_EQ(v, 0.f);
}

TEST(BatchNorm, StandardizedBatchIsUnchanged) {
  Tape<double> tape;
  auto stats = BatchNormStats<double>::identity(1);
  auto x = tape.constant(TensorD({2, 1}, {-1.0, 1.0}));
  auto y = batchnorm(x, tape.constant(TensorD({1}, 1.0)), tape.constant(TensorD({1}, 0.0)), stats,
                     NormMode::kTrain, 1);
  EXPECT_NEAR(y.value()[0], -1.0, 1e-5);
  EXPECT_NEAR(y.value()[1], 1.0, 1e-5);
}

TEST(BatchNorm, RunningStatisticsUseMomentum) {
  Tape<double> tape;
  auto stats = BatchNormStats<double>::identity(1);
  auto x = tape.constant(TensorD({2, 1}, {1.0, 3.0}));
  batchnorm(x, tape.constant(TensorD({1}, 1.0)), tape.constant(TensorD({1}, 0.0)), stats, NormMode::kTrain, 1);
  EXPECT_NEAR(stats.running_mean[0], 0.1 * 2.0, 1e-12);
  // unbiased batch variance of {1,3} is 2
  EXPECT_NEAR(stats.running_var[0], 0.9 * 1.0 + 0.1 * 2.0, 1e-12);

  auto frozen = stats;
  batchnorm(x, tape.constant(TensorD({1}, 1.0)), tape.constant(TensorD({1}, 0.0)), frozen,
            NormMode::kTrainFrozen, 1);
  EXPECT_EQ(frozen.running_mean, stats.running_mean);
}

TEST(BatchNorm, EvalModeUsesRunningStatistics) {
  Tape<double> tape;
  BatchNormStats<double> stats{TensorD({1}, 2.0), TensorD({1}, 4.0)};
  auto x = tape.constant(TensorD({1, 1}, {4.0}));
  auto y = batchnorm(x, tape.constant(TensorD({1}, 1.0)), tape.constant(TensorD({1}, 0.0)), stats,
                     NormMode::kEval, 1);
  EXPECT_NEAR(y.value()[0], 2.0 / std::sqrt(4.0 + 1e-5), 1e-12);
}

TEST(BatchNorm, ZeroExtentIsAnError) {
  Tape<float> tape;
  auto stats = BatchNormStats<float>::identity(2);
  auto x = tape.constant(Tensor({0, 2}));
  EXPECT_THROW(batchnorm(x, tape.constant(Tensor({2}, 1.f)), tape.constant(Tensor({2})), stats,
                         NormMode::kTrain, 1),
               DimensionError);
}

TEST(Tape, NonFiniteForwardValueIsReported) {
  Tape<float> tape;
  auto x = tape.constant(Tensor({1}, {std::numeric_limits<float>::max()}));
  EXPECT_THROW(scale(x, 10.0), NumericalError);
}

TEST(Tape, LeavesWithoutGradGetNoGradient) {
  Tape<double> tape;
  auto a = tape.leaf(TensorD({2}, {1.0, 2.0}), true);
  auto b = tape.constant(TensorD({2}, {3.0, 4.0}));
  auto s = sum(mul(a, b));
  tape.backward(s);
  EXPECT_EQ(tape.grad(a), TensorD({2}, {3.0, 4.0}));
  EXPECT_EQ(tape.grad_slot(b), nullptr);
}

// Every differentiable primitive against central differences at float64 on
// random inputs in [-1, 1]; a fixed random weighting reduces tensor outputs.
class PrimitiveGradient : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradient, MatchesFiniteDifferences) {
  const std::uint64_t seed = 100 + GetParam();
  auto w = [seed](const Shape& s) { return random_tensor(s, seed * 7 + 3); };

  expect_gradients_match(
      [&](Tape<double>&, std::span<const Var<double>> in) { return weighted_sum(add(in[0], in[1]), w({2, 3})); },
      {random_tensor({2, 3}, seed), random_tensor({2, 3}, seed + 1)});
  expect_gradients_match(
      [&](Tape<double>&, std::span<const Var<double>> in) { return weighted_sum(sub(in[0], in[1]), w({2, 3})); },
      {random_tensor({2, 3}, seed), random_tensor({2, 3}, seed + 1)});
  expect_gradients_match(
      [&](Tape<double>&, std::span<const Var<double>> in) {
        return weighted_sum(add_broadcast(in[0], in[1]), w({2, 3, 4}));
      },
      {random_tensor({2, 3, 4}, seed), random_tensor({3, 4}, seed + 1)});
  expect_gradients_match(
      [&](Tape<double>&, std::span<const Var<double>> in) { return weighted_sum(mul(in[0], in[1]), w({5})); },
      {random_tensor({5}, seed), random_tensor({5}, seed + 1)});
  expect_gradients_match(
      [&](Tape<double>&, std::span<const Var<double>> in) { return weighted_sum(scale(in[0], -2.5), w({4})); },
      {random_tensor({4}, seed)});
  expect_gradients_match(
      [&](Tape<double>&, std::span<const Var<double>> in) {
        return weighted_sum(mul_constant(in[0], w({2, 2})), w({2, 2}));
      },
      {random_tensor({2, 2}, seed)});
  expect_gradients_match(
      [&](Tape<double>&, std::span<const Var<double>> in) {
        return weighted_sum(matmul(in[0], in[1]), w({2, 3, 5}));
      },
      {random_tensor({2, 3, 4}, seed), random_tensor({4, 5}, seed + 1)});
  expect_gradients_match(
      [&](Tape<double>&, std::span<const Var<double>> in) {
        return weighted_sum(matmul_bt(in[0], in[1]), w({3, 5}));
      },
      {random_tensor({3, 4}, seed), random_tensor({5, 4}, seed + 1)});
  expect_gradients_match(
      [&](Tape<double>&, std::span<const Var<double>> in) { return weighted_sum(bmm(in[0], in[1]), w({2, 3, 5})); },
      {random_tensor({2, 3, 4}, seed), random_tensor({2, 4, 5}, seed + 1)});
  expect_gradients_match(
      [&](Tape<double>&, std::span<const Var<double>> in) {
        return weighted_sum(bmm_bt(in[0], in[1]), w({2, 3, 5}));
      },
      {random_tensor({2, 3, 4}, seed), random_tensor({2, 5, 4}, seed + 1)});
  expect_gradients_match(
      [&](Tape<double>&, std::span<const Var<double>> in) { return weighted_sum(transpose(in[0]), w({4, 3})); },
      {random_tensor({3, 4}, seed)});
  expect_gradients_match(
      [&](Tape<double>&, std::span<const Var<double>> in) {
        return weighted_sum(permute(in[0], {2, 0, 3, 1}), w({4, 2, 5, 3}));
      },
      {random_tensor({2, 3, 4, 5}, seed)});
  expect_gradients_match(
      [&](Tape<double>&, std::span<const Var<double>> in) {
        return weighted_sum(slice(in[0], 1, 1, 2), w({2, 2, 3}));
      },
      {random_tensor({2, 4, 3}, seed)});
  expect_gradients_match(
      [&](Tape<double>&, std::span<const Var<double>> in) {
        return weighted_sum(reshape(in[0], {6, 2}), w({6, 2}));
      },
      {random_tensor({3, 4}, seed)});
  for (std::size_t axis = 0; axis < 3; ++axis) {
    expect_gradients_match(
        [&](Tape<double>&, std::span<const Var<double>> in) {
          return weighted_sum(softmax(in[0], axis), w({2, 3, 4}));
        },
        {random_tensor({2, 3, 4}, seed)});
  }
  expect_gradients_match(
      [&](Tape<double>&, std::span<const Var<double>> in) { return weighted_sum(gelu(in[0]), w({3, 3})); },
      {random_tensor({3, 3}, seed)});
  expect_gradients_match([&](Tape<double>&, std::span<const Var<double>> in) { return mean(in[0]); },
                         {random_tensor({3, 3}, seed)});
  for (NormMode mode : {NormMode::kTrainFrozen, NormMode::kEval}) {
    BatchNormStats<double> stats{random_tensor({4}, seed + 9), random_tensor({4}, seed + 10, 0.5, 1.5)};
    expect_gradients_match(
        [&](Tape<double>&, std::span<const Var<double>> in) {
          auto local = stats;
          return weighted_sum(batchnorm(in[0], in[1], in[2], local, mode, 1), w({3, 4, 2}));
        },
        {random_tensor({3, 4, 2}, seed), random_tensor({4}, seed + 1), random_tensor({4}, seed + 2)});
  }
}

INSTANTIATE_TEST_SUITE_P(RandomInputs, PrimitiveGradient, ::testing::Range(0, 5));

TEST(Adam, ZeroGradientIsAFixedPoint) {
  Tensor p({3}, {1.f, -2.f, 0.5f});
  const Tensor before = p;
  std::vector<Tensor*> params{&p};
  std::vector<Tensor> grads{Tensor({3})};
  auto state = AdamState::for_params(std::vector<Tensor>{p}, AdamConfig{0.1});
  for (int i = 0; i < 10; ++i) adam_step(params, grads, state);
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.step, 10u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // m_hat = g = 1 and v_hat = g^2 = 1 after bias correction, so the step is lr / (1 + eps).
  Tensor p({1}, {0.f});
  std::vector<Tensor*> params{&p};
  std::vector<Tensor> grads{Tensor({1}, {1.f})};
  auto state = AdamState::for_params(std::vector<Tensor>{p}, AdamConfig{0.1});
  adam_step(params, grads, state);
  EXPECT_NEAR(p[0], -0.1, 1e-6);
}

TEST(Adam, ConvergesOnConvexQuadratic) {
  Tensor w({1}, {1.f});
  std::vector<Tensor*> params{&w};
  auto state = AdamState::for_params(std::vector<Tensor>{w}, AdamConfig{0.1});
  for (int i = 0; i < 200; ++i) {
    std::vector<Tensor> grads{Tensor({1}, {2.f * w[0]})};
    adam_step(params, grads, state);
  }
  EXPECT_LT(std::abs(w[0]), 0.05f);
}

TEST(Adam, NanGradientNamesTheParameter) {
  Tensor p({2});
  std::vector<Tensor*> params{&p};
  std::vector<Tensor> grads{Tensor({2}, {0.f, std::nanf("")})};
  std::vector<std::string> names{"encoder.0.wq"};
  auto state = AdamState::for_params(std::vector<Tensor>{p});
  try {
    adam_step(params, grads, state, names);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.0.wq"), std::string::npos);
  }
  EXPECT_EQ(state.step, 0u);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
  }
}

TEST(Rng, UniformAndNormalMoments) {
  Rng rng(5);
  double su = 0, sn = 0, sn2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.01);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsAPermutationAndStateRestores) {
  Rng rng(9);
  std::vector<int> v(20);
  std::iota(v.begin(), v.end(), 0);
  const auto saved = rng.state();
  rng.shuffle(std::span<int>(v));
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sorted[i], i);

  rng.set_state(saved);
  std::vector<int> w(20);
  std::iota(w.begin(), w.end(), 0);
  rng.shuffle(std::span<int>(w));
  EXPECT_EQ(v, w);
}
