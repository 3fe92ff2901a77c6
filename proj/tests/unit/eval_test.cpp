#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "../support/oracles.hpp"
#include "p2lhap/data.hpp"
#include "p2lhap/gradcheck.hpp"
#include "p2lhap/losses.hpp"
#include "p2lhap/metrics.hpp"
#include "p2lhap/random.hpp"
#include "p2lhap/segmentation.hpp"

using namespace p2lhap;

namespace {

constexpr int A = 0, B = 1, C = 2;

Var<double> probs_var(Tape<double>& t, Shape shape, std::vector<double> v) {
  return t.constant(TensorD(std::move(shape), std::move(v)));
}

std::vector<int> random_labels(Rng& rng, std::size_t n, int classes) {
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  return y;
}

}  // namespace

// ---- losses ----

TEST(CrossEntropy, KnownValues) {
  Tape<double> t;
  auto perfect = cross_entropy(probs_var(t, {1, 2, 3}, {1, 0, 0, 0, 0, 1}), std::vector<int>{0, 2});
  EXPECT_LE(perfect.value()[0], 1e-7);
  auto uniform = cross_entropy(probs_var(t, {1, 1, 4}, {.25, .25, .25, .25}), std::vector<int>{3});
  EXPECT_NEAR(uniform.value()[0], std::log(4.0), 1e-12);
  auto mixed = cross_entropy(probs_var(t, {1, 2, 2}, {0.5, 0.5, 0.75, 0.25}), std::vector<int>{0, 1});
  EXPECT_NEAR(mixed.value()[0], (-std::log(0.5) - std::log(0.25)) / 2, 1e-12);
  EXPECT_NEAR(mixed.value()[0], 1.0397, 1e-4);
  auto clamped = cross_entropy(probs_var(t, {1, 1, 2}, {1, 0}), std::vector<int>{1});
  EXPECT_NEAR(clamped.value()[0], -std::log(1e-8), 1e-9);
  EXPECT_THROW(cross_entropy(probs_var(t, {1, 1, 2}, {1, 0}), std::vector<int>{2}), std::invalid_argument);
  EXPECT_THROW(cross_entropy(probs_var(t, {1, 1, 2}, {1, 0}), std::vector<int>{0, 1}), DimensionError);
}

TEST(CrossEntropy, ClassWeightsScaleRows) {
  Tape<double> t;
  auto w = cross_entropy(probs_var(t, {2, 2}, {0.5, 0.5, 0.25, 0.75}), std::vector<int>{0, 1},
                         std::vector<double>{2.0, 0.0});
  EXPECT_NEAR(w.value()[0], 2.0 * -std::log(0.5) / 2.0, 1e-12);
  auto eff = effective_number_weights(std::vector<int>{0, 0, 0, 1}, 3);
  EXPECT_NEAR(eff[0] + eff[1] + eff[2], 3.0, 1e-12);
  EXPECT_EQ(eff[2], 0.0);
  EXPECT_GT(eff[1], eff[0]);
}

TEST(ForecastLoss, MatchesCrossEntropy) {
  Tape<double> t;
  EXPECT_NEAR(forecast_loss(probs_var(t, {1, 1, 2}, {0.5, 0.5}), std::vector<int>{1}).value()[0], std::log(2.0), 1e-12);
  EXPECT_LE(forecast_loss(probs_var(t, {1, 1, 2}, {0, 1}), std::vector<int>{1}).value()[0], 1e-7);
  auto p = random_tensor({2, 3, 4}, 5, 0.05, 1.0);
  std::vector<int> y{0, 1, 2, 3, 0, 1};
  EXPECT_EQ(forecast_loss(t.constant(p), y).value()[0], cross_entropy(t.constant(p), y).value()[0]);
}

TEST(Tmse, KnownValues) {
  Tape<double> t;
  auto same = tmse_smoothing(probs_var(t, {1, 2, 2}, {0.3, 0.7, 0.3, 0.7}));
  EXPECT_EQ(same.value()[0], 0.0);
  // one class track 0.9 -> 0.1: |ln 9| > 2 clips to 2, squared 4; other track 0.1 -> 0.9 likewise
  auto jump = tmse_smoothing(probs_var(t, {1, 2, 2}, {0.9, 0.1, 0.1, 0.9}));
  EXPECT_NEAR(jump.value()[0], 4.0, 1e-12);
  bool degenerate = false;
  auto single = tmse_smoothing(probs_var(t, {1, 1, 2}, {0.5, 0.5}), 2.0, &degenerate);
  EXPECT_TRUE(degenerate);
  EXPECT_EQ(single.value()[0], 0.0);
}

TEST(Tmse, HugeThresholdIsPlainSquaredLogDifference) {
  Tape<double> t;
  auto p = random_tensor({2, 5, 3}, 8, 0.01, 1.0);
  auto loss = tmse_smoothing(t.constant(p), 1e9);
  double expected = 0;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t n = 1; n < 5; ++n)
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = std::log(p.at({b, n, c})) - std::log(p.at({b, n - 1, c}));
        expected += d * d;
      }
  EXPECT_NEAR(loss.value()[0], expected / (2 * 4 * 3), 1e-12);
}

TEST(Tmse, InvariantUnderClassPermutation) {
  Tape<double> t;
  auto p = random_tensor({2, 6, 3}, 9, 0.001, 1.0);
  TensorD q(p.shape());
  const std::size_t perm[3] = {2, 0, 1};
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t c = 0; c < 3; ++c) q[i * 3 + c] = p[i * 3 + perm[c]];
  EXPECT_NEAR(tmse_smoothing(t.constant(p)).value()[0], tmse_smoothing(t.constant(q)).value()[0], 1e-12);
}

TEST(Tmse, GradientSkipsPreviousTerm) {
  Tape<double> t;
  auto p = t.leaf(TensorD({1, 2, 1}, {0.5, 0.6}));
  auto loss = tmse_smoothing(p);
  t.backward(loss);
  auto g = t.grad(p);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_NEAR(g[1], 2.0 * std::log(0.6 / 0.5) / 0.6, 1e-12);
}

TEST(TotalLoss, SumsAndEchoes) {
  auto r = total_loss(1, 2, 3);
  EXPECT_EQ(r.l_total, 6.0);
  EXPECT_EQ(r.l_cls, 1.0);
  EXPECT_EQ(r.l_seg, 2.0);
  EXPECT_EQ(r.l_pre, 3.0);
  EXPECT_EQ(total_loss(0, 0, 0).l_total, 0.0);
}

TEST(MseLoss, Values) {
  Tape<double> t;
  auto x = t.constant(TensorD({2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(mse_loss(x, TensorD({2, 2}, {1, 2, 3, 4})).value()[0], 0.0);
  EXPECT_NEAR(mse_loss(x, TensorD({2, 2}, {1.5, 2.5, 3.5, 4.5})).value()[0], 0.25, 1e-12);
}

// ---- segmentation ----

TEST(Smooth, Examples) {
  EXPECT_EQ(smooth(std::vector<int>{A, A, B, A, A}, 5), (std::vector<int>{A, A, A, A, A}));
  std::vector<int> all_a(12, A);
  for (std::size_t k : {1u, 3u, 9u, 13u}) EXPECT_EQ(smooth(all_a, k), all_a);
  std::vector<int> mixed{A, B, C, B, A, C};
  EXPECT_EQ(smooth(mixed, 1), mixed);
  EXPECT_THROW(smooth(mixed, 4), std::invalid_argument);
  EXPECT_THROW(smooth(mixed, 0), std::invalid_argument);
}

TEST(Smooth, TieBreaksByDistanceThenId) {
  // window of 3 at index 1 sees A,B,C once each: the center wins
  EXPECT_EQ(smooth(std::vector<int>{A, B, C}, 3)[1], B);
  // at index 0 window is {C, A}: tie, C is at distance 0
  EXPECT_EQ(smooth(std::vector<int>{C, A}, 3)[0], C);
  // index 2 of [B,A,C,B,A] window 5: A and B twice, both at distance 1, lower id wins
  EXPECT_EQ(smooth(std::vector<int>{B, A, C, B, A}, 5)[2], A);
}

TEST(Segments, Examples) {
  auto s = extract_segments(std::vector<int>{A, A, B, B, C});
  EXPECT_EQ(s, (std::vector<Segment>{{0, 1, A}, {2, 3, B}, {4, 4, C}}));
  EXPECT_EQ(extract_segments(std::vector<int>{A}), (std::vector<Segment>{{0, 0, A}}));
  EXPECT_EQ(extract_segments(smooth(std::vector<int>{A, A, B, A, A}, 5)), (std::vector<Segment>{{0, 4, A}}));
  EXPECT_THROW(extract_segments(std::vector<int>{}), std::invalid_argument);
}

TEST(Segments, CsvUsesPatchTimes) {
  const auto path = std::filesystem::temp_directory_path() / "p2lhap_segments.csv";
  std::vector<Segment> segs{{0, 1, 0}, {2, 4, 1}};
  std::vector<std::string> names{"walk", "run"};
  write_segments_csv(path, segs, SegmentTiming{10, 10, 20.0}, names);
  std::ifstream in(path);
  std::string header, r1, r2;
  std::getline(in, header);
  std::getline(in, r1);
  std::getline(in, r2);
  EXPECT_EQ(header, "start_patch,end_patch,start_time_s,end_time_s,class_id,class_name");
  EXPECT_EQ(r1, "0,1,0.000,1.000,0,walk");
  EXPECT_EQ(r2, "2,4,1.000,2.500,1,run");
  std::filesystem::remove(path);
}

TEST(SegmentationProperties, RandomSequences) {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const int classes = 1 + static_cast<int>(rng.below(5));
    const std::size_t n = 1 + rng.below(50);
    auto y = random_labels(rng, n, classes);
    const std::size_t size = 2 * rng.below(6) + 1;
    auto s = smooth(y, size);
    EXPECT_EQ(s, oracle::smooth(y, size, classes));
    for (int v : s) EXPECT_NE(std::find(y.begin(), y.end(), v), y.end());
    auto segs = extract_segments(y);
    EXPECT_EQ(expand_segments(segs), y);
    for (std::size_t k = 1; k < segs.size(); ++k) {
      EXPECT_EQ(segs[k - 1].end + 1, segs[k].start);
      EXPECT_NE(segs[k - 1].class_id, segs[k].class_id);
    }
  }
}

TEST(SegmentationProperties, IdempotentOnLongRunsAndRemovesOutliers) {
  Rng rng(78);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t size = 2 * (1 + rng.below(4)) + 1;
    std::vector<int> y;
    int cls = 0;
    for (int r = 0; r < 5; ++r) {
      cls = (cls + 1 + static_cast<int>(rng.below(3))) % 4;
      y.insert(y.end(), size + rng.below(5), cls);
    }
    EXPECT_EQ(smooth(y, size), y);
    // an isolated flip inside a run whose neighborhood is all one class
    std::vector<int> z(3 * size, 1);
    z[3 * size / 2] = 3;
    EXPECT_EQ(smooth(z, size), std::vector<int>(3 * size, 1));
  }
}

// ---- metrics ----

TEST(Accuracy, Examples) {
  std::vector<int> y{A, B, C, A};
  auto perfect = accuracy(y, y, 3);
  EXPECT_EQ(perfect.plain, 1.0);
  EXPECT_EQ(perfect.one_vs_rest, 1.0);
  auto two = accuracy(std::vector<int>{A, A, B}, std::vector<int>{A, B, B}, 2);
  EXPECT_NEAR(two.plain, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(two.one_vs_rest, 4.0 / 6.0, 1e-12);
  auto wrong = accuracy(std::vector<int>{B}, std::vector<int>{A}, 3);
  EXPECT_EQ(wrong.plain, 0.0);
  EXPECT_NEAR(wrong.one_vs_rest, 1.0 / 3.0, 1e-12);  // only class C is a true negative
  EXPECT_THROW(accuracy(std::vector<int>{A}, std::vector<int>{A, B}, 2), std::invalid_argument);
}

TEST(WeightedF1, Examples) {
  std::vector<int> y{A, B, C};
  EXPECT_EQ(weighted_f1(y, y, 3), 1.0);
  EXPECT_NEAR(weighted_f1(std::vector<int>{A, B, B}, std::vector<int>{A, A, B}, 2), 2.0 / 3.0, 1e-12);
  // class C is only predicted, never true: weight 0
  EXPECT_NEAR(weighted_f1(std::vector<int>{A, C}, std::vector<int>{A, A}, 3), 2.0 / 3.0, 1e-12);
}

TEST(Jaccard, Examples) {
  std::vector<int> y{A, B, B, C};
  EXPECT_EQ(jaccard(y, y, 3), 1.0);
  EXPECT_EQ(jaccard(std::vector<int>{A, A}, std::vector<int>{B, B}, 2), 0.0);
  // class A true on 0-9 and predicted on 5-14
  std::vector<int> truth(15, B), pred(15, B);
  std::fill_n(truth.begin(), 10, A);
  std::fill(pred.begin() + 5, pred.end(), A);
  auto per_class = class_jaccard(pred, truth, 3);
  ASSERT_TRUE(per_class[A].has_value());
  EXPECT_NEAR(*per_class[A], 5.0 / 15.0, 1e-12);
  EXPECT_NEAR(*per_class[B], 0.0, 1e-12);
  EXPECT_FALSE(per_class[C].has_value());
  EXPECT_NEAR(jaccard(pred, truth, 3), (5.0 / 15.0 + 0.0) / 2.0, 1e-12);
  EXPECT_NEAR(jaccard(pred, truth, 3), jaccard(truth, pred, 3), 1e-15);
}

TEST(ForecastMse, Values) {
  std::vector<float> a{1, 2, 3}, b{1.5f, 2.5f, 3.5f};
  EXPECT_EQ(forecast_mse(a, a), 0.0);
  EXPECT_NEAR(forecast_mse(a, b), 0.25, 1e-12);
  EXPECT_THROW(forecast_mse(a, std::vector<float>{1}), std::invalid_argument);
}

TEST(MetricsProperties, RandomSequencesMatchOracle) {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const int classes = 1 + static_cast<int>(rng.below(5));
    const std::size_t n = 1 + rng.below(50);
    auto t = random_labels(rng, n, classes);
    auto p = random_labels(rng, n, classes);
    auto a = accuracy(p, t, static_cast<std::size_t>(classes));
    EXPECT_NEAR(a.plain, oracle::accuracy_plain(p, t), 1e-12);
    EXPECT_NEAR(a.one_vs_rest, oracle::accuracy_ovr(p, t, classes), 1e-12);
    if (classes == 2) EXPECT_NEAR(a.plain, a.one_vs_rest, 1e-12);
    EXPECT_NEAR(weighted_f1(p, t, static_cast<std::size_t>(classes)), oracle::weighted_f1(p, t, classes), 1e-12);
    EXPECT_NEAR(jaccard(p, t, static_cast<std::size_t>(classes)), oracle::jaccard(p, t, classes), 1e-12);
    EXPECT_NEAR(jaccard(p, t, static_cast<std::size_t>(classes)), jaccard(t, p, static_cast<std::size_t>(classes)), 1e-15);
    auto cm = confusion_matrix(p, t, static_cast<std::size_t>(classes));
    EXPECT_EQ(cm.total(), n);
    EXPECT_NEAR(static_cast<double>(cm.trace()) / static_cast<double>(n), a.plain, 1e-15);
    // joint relabeling leaves weighted F1 unchanged
    std::vector<int> perm(static_cast<std::size_t>(classes));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<int>(perm));
    auto relabel = [&](std::vector<int> v) {
      for (auto& x : v) x = perm[static_cast<std::size_t>(x)];
      return v;
    };
    EXPECT_NEAR(weighted_f1(relabel(p), relabel(t), static_cast<std::size_t>(classes)),
                weighted_f1(p, t, static_cast<std::size_t>(classes)), 1e-12);
  }
}

TEST(MetricsReport, JsonAndConfusionCsv) {
  std::vector<int> t{0, 0, 1, 1}, p{0, 1, 1, 1};
  auto r = compute_metrics(p, t, 2);
  r.mse = 0.5;
  std::vector<std::string> names{"sit", "walk"};
  const std::string j = metrics_json(r, names);
  for (const char* key : {"accuracy_plain", "accuracy_one_vs_rest", "weighted_f1", "jaccard", "mse", "per_class"})
    EXPECT_NE(j.find(key), std::string::npos) << key;
  const auto path = std::filesystem::temp_directory_path() / "p2lhap_cm.csv";
  write_confusion_csv(r.confusion, names, path);
  std::ifstream in(path);
  std::string l0, l1, l2;
  std::getline(in, l0);
  std::getline(in, l1);
  std::getline(in, l2);
  EXPECT_EQ(l0, "true\\pred,sit,walk");
  EXPECT_EQ(l1, "sit,1,1");
  EXPECT_EQ(l2, "walk,0,2");
  std::filesystem::remove(path);
}

TEST(PatchLabelOracle, RandomSequences) {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const int classes = 1 + static_cast<int>(rng.below(5));
    const std::size_t l = 1 + rng.below(50);
    const std::size_t p = 1 + rng.below(l), s = 1 + rng.below(p);
    auto y = random_labels(rng, l, classes);
    EXPECT_EQ(derive_patch_labels(y, p, s), oracle::patch_labels(y, p, s, classes));
  }
}
