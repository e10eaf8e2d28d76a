// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "sammese/data_io.hpp"
#include "sammese/metrics.hpp"
#include "test_support.hpp"

namespace sammese {
namespace {

namespace oracle = testing::oracle;
using testing::random_binary;
using testing::random_tensor;

double vmax(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

Tensor flip(const Tensor& t) {
  Tensor o(t.shape());
  const int64_t h = t.dim(0), w = t.dim(1);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) o.at(y, w - 1 - x) = t.at(y, x);
  return o;
}

/// Random map with a blob-like GT so both classes and every quadrant appear.
std::pair<Tensor, Tensor> fixture(uint64_t seed, int64_t size = 8) {
  Tensor m = random_tensor({size, size}, seed, 0.0, 1.0);
  Tensor g = random_binary({size, size}, seed + 1000, 0.4);
  if (seed % 7 == 0) g.fill(0.0);
  if (seed % 11 == 0) g.fill(1.0);
  return {m, g};
}

TEST(Metrics, MaeCases) {
  const Tensor g = random_binary({8, 8}, 1);
  EXPECT_EQ(mae(g, g), 0.0);
  EXPECT_DOUBLE_EQ(mae(Tensor({5, 5}, 0.25), Tensor({5, 5})), 0.25);
  const Tensor m = random_tensor({8, 8}, 2, 0.0, 1.0);
  EXPECT_NEAR(mae(m, g), oracle::mae(m, g), 1e-12);
  Tensor inv(m.shape());
  for (int64_t i = 0; i < m.numel(); ++i) inv[i] = 1.0 - m[i];
  EXPECT_NEAR(mae(m, g) + mae(inv, g), 1.0, 1e-12);
  EXPECT_THROW(mae(m, Tensor({4, 4})), ShapeError);
}

TEST(Metrics, FMeasureCases) {
  const Tensor g = random_binary({8, 8}, 3);
  EXPECT_DOUBLE_EQ(f_measure(g, g), 1.0);
  Tensor inv(g.shape());
  for (int64_t i = 0; i < g.numel(); ++i) inv[i] = 1.0 - g[i];
  const auto curve = f_measure_curve(inv, g).values;
  const auto expect = oracle::f_curve(inv, g);
  for (int t = 1; t < 256; ++t) EXPECT_EQ(curve[static_cast<size_t>(t)], 0.0);  // no overlap
  EXPECT_NEAR(f_measure(inv, g), vmax(expect), 1e-12);
  for (uint64_t s = 0; s < 20; ++s) {
    const Tensor m = random_tensor({4, 4}, 10 + s, 0.0, 1.0), gg = random_binary({4, 4}, 40 + s);
    const auto c = f_measure_curve(m, gg).values, o = oracle::f_curve(m, gg);
    for (size_t t = 0; t < 256; ++t) ASSERT_NEAR(c[t], o[t], 1e-12);
  }
  EXPECT_EQ(f_measure(random_tensor({4, 4}, 5, 0, 1), Tensor({4, 4})), 0.0);  // empty GT
}

TEST(Metrics, SMeasureCases) {
  const Tensor g = random_binary({8, 8}, 6);
  EXPECT_NEAR(s_measure(g, g), 1.0, 1e-6);
  EXPECT_NEAR(s_measure(Tensor({6, 6}, 0.3), Tensor({6, 6})), 0.7, 1e-15);
  EXPECT_NEAR(s_measure(Tensor({6, 6}, 0.3), Tensor({6, 6}, 1.0)), 0.3, 1e-15);
  const Tensor m = random_tensor({8, 8}, 7, 0.0, 1.0);
  EXPECT_NEAR(s_measure(m, g), oracle::s_measure(m, g), 1e-9);
}

TEST(Metrics, EMeasureCases) {
  const Tensor g = random_binary({8, 8}, 8);
  EXPECT_DOUBLE_EQ(e_measure(g, g), 1.0);
  Tensor inv(g.shape());
  for (int64_t i = 0; i < g.numel(); ++i) inv[i] = 1.0 - g[i];
  const auto c = e_measure_curve(inv, g).values, o = oracle::e_curve(inv, g);
  for (size_t t = 0; t < 256; ++t) ASSERT_NEAR(c[t], o[t], 1e-12);
  // the inverted binary prediction is the least aligned one on the curve
  std::vector<uint8_t> pred(64);
  for (size_t i = 0; i < 64; ++i) pred[i] = inv[static_cast<int64_t>(i)] > 0.5;
  EXPECT_NEAR(e_measure_binary(pred, g), *std::min_element(c.begin() + 1, c.end()), 1e-12);
  EXPECT_LT(e_measure_binary(pred, g), 0.5);
}

TEST(Metrics, AllMetricsMatchOraclesOnRandomFixtures) {
  for (uint64_t s = 0; s < 200; ++s) {
    const auto [m, g] = fixture(s);
    ASSERT_NEAR(mae(m, g), oracle::mae(m, g), 1e-9) << s;
    ASSERT_NEAR(f_measure(m, g), vmax(oracle::f_curve(m, g)), 1e-9) << s;
    ASSERT_NEAR(s_measure(m, g), oracle::s_measure(m, g), 1e-9) << s;
    ASSERT_NEAR(e_measure(m, g), vmax(oracle::e_curve(m, g)), 1e-9) << s;
  }
}

// S-measure is left out: the rounded centroid split is not mirror symmetric
TEST(Metrics, FlipInvariance) {
  for (uint64_t s = 1; s < 30; ++s) {
    const auto [m, g] = fixture(s, 9);
    const ImageScores a = score_image(m, g), b = score_image(flip(m), flip(g));
    EXPECT_NEAR(a.mae, b.mae, 1e-12);
    EXPECT_NEAR(a.f_max, b.f_max, 1e-12);
    EXPECT_NEAR(a.e_max, b.e_max, 1e-12);
  }
}

TEST(Metrics, ThresholdMetricsIgnoreMonotoneRescaling) {
  for (uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    Tensor m({8, 8}), m2({8, 8});
    for (int64_t i = 0; i < 64; ++i) {
      const int64_t level = rng.below(128);
      m[i] = static_cast<double>(level) / 255.0;
      m2[i] = static_cast<double>(2 * level + 1) / 255.0;
    }
    const Tensor g = random_binary({8, 8}, 100 + s);
    EXPECT_NEAR(f_measure(m, g), f_measure(m2, g), 1e-12);
    EXPECT_NEAR(e_measure(m, g), e_measure(m2, g), 1e-12);
  }
}

TEST(Metrics, AggregateIsTheArithmeticMean) {
  ImageScores a, b;
  a.mae = 0.1;
  a.s_measure = 0.5;
  a.f_max = 0.2;
  a.e_max = 0.4;
  b.mae = 0.3;
  b.s_measure = 0.7;
  b.f_max = 0.6;
  b.e_max = 1.0;
  const EvalResult r = aggregate({a, b});
  EXPECT_DOUBLE_EQ(r.mean.mae, 0.2);
  EXPECT_DOUBLE_EQ(r.mean.s_measure, 0.6);
  EXPECT_DOUBLE_EQ(r.mean.f_max, 0.4);
  EXPECT_DOUBLE_EQ(r.mean.e_max, 0.7);
}

TEST(Metrics, DatasetEvaluation) {
  testing::TempDir dir("eval");
  const auto data = make_synthetic_dataset(4, 32, 2);
  std::filesystem::create_directories(dir / "pred");
  std::filesystem::create_directories(dir / "gt");
  for (const auto& s : data) {
    write_gray_png(dir / ("gt/" + s.id + ".png"), s.gt);
    write_gray_png(dir / ("pred/" + s.id + ".png"), s.gt);
  }
  const EvalResult r = evaluate_dataset(dir / "pred", dir / "gt");
  ASSERT_EQ(r.per_image.size(), 4u);
  EXPECT_EQ(r.mean.mae, 0.0);
  EXPECT_NEAR(r.mean.s_measure, 1.0, 1e-6);
  EXPECT_NEAR(r.mean.f_max, 1.0, 1e-12);
  EXPECT_NEAR(r.mean.e_max, 1.0, 1e-12);

  write_eval_csv(dir / "e.csv", r);
  std::ifstream csv(dir / "e.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "id,s_measure,e_max,e_mean,f_max,f_mean,mae,empty_gt");
  EXPECT_NE(format_eval_table(r, "syn").find("syn"), std::string::npos);

  std::filesystem::remove(dir / "pred/syn2.png");
  try {
    evaluate_dataset(dir / "pred", dir / "gt");
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("syn2"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace sammese
