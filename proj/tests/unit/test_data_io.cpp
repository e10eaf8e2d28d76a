// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <opencv2/imgcodecs.hpp>

#include "sammese/data_io.hpp"
#include "test_support.hpp"

namespace sammese {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

int64_t foreground(const Tensor& gt) {
  int64_t n = 0;
  for (double v : gt.values()) n += v > 0.5;
  return n;
}

TEST(DataIo, LoadsMatchedTriplesSortedById) {
  TempDir dir("ds");
  write_dataset(make_synthetic_dataset(4, 40, 3), dir.str(), Modality::thermal);
  const auto data = load_dataset(dir.str(), Modality::thermal);
  ASSERT_EQ(data.size(), 4u);
  EXPECT_EQ(data[0].id, "syn0");
  EXPECT_EQ(data[3].id, "syn3");
  EXPECT_EQ(data[2].rgb.shape(), (Shape{3, 40, 40}));
  EXPECT_EQ(data[2].gt.shape(), (Shape{40, 40}));
  EXPECT_THROW(load_dataset(dir.str(), Modality::depth), DatasetError);  // no Depth/ dir
}

TEST(DataIo, GroundTruthIsBinarisedWithSameSupport) {
  TempDir dir("gt");
  cv::Mat m(5, 6, CV_8UC1, cv::Scalar(0));
  m.at<uint8_t>(1, 2) = 255;
  m.at<uint8_t>(4, 5) = 255;
  const std::string path = dir / "g.png";
  cv::imwrite(path, m);
  const Tensor gt = read_mask(path);
  ASSERT_EQ(gt.shape(), (Shape{5, 6}));
  for (int64_t y = 0; y < 5; ++y)
    for (int64_t x = 0; x < 6; ++x) {
      EXPECT_EQ(gt.at(y, x), m.at<uint8_t>(static_cast<int>(y), static_cast<int>(x)) ? 1.0 : 0.0);
    }
}

TEST(DataIo, OrphanSampleIsNamedInTheError) {
  TempDir dir("orphan");
  auto data = make_synthetic_dataset(2, 32, 0);
  data[1].id = "x7";
  write_dataset(data, dir.str(), Modality::thermal);
  fs::remove(fs::path(dir.str()) / "GT" / "x7.png");
  try {
    load_dataset(dir.str(), Modality::thermal);
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("x7"), std::string::npos) << e.what();
  }
  // without labels the same directory loads fine
  EXPECT_EQ(load_dataset(dir.str(), Modality::thermal, false).size(), 2u);
}

TEST(DataIo, SizeMismatchWithinATripleIsAnError) {
  TempDir dir("size");
  write_dataset(make_synthetic_dataset(1, 32, 0), dir.str(), Modality::depth);
  cv::imwrite((fs::path(dir.str()) / "GT" / "syn0.png").string(), cv::Mat(20, 32, CV_8UC1, cv::Scalar(0)));
  EXPECT_THROW(load_dataset(dir.str(), Modality::depth), DatasetError);
}

TEST(DataIo, PngRoundTripKeepsEightBitLevels) {
  TempDir dir("png");
  const Tensor m = testing::random_tensor({7, 9}, 1, 0.0, 1.0);
  write_gray_png(dir / "m.png", m);
  const Tensor back = read_image(dir / "m.png");
  const Tensor q = quantize8(m);
  for (int64_t i = 0; i < 63; ++i) EXPECT_NEAR(back[i], q[i], 1e-12);
}

TEST(DataIo, PreprocessShapes) {
  SamplePair s;
  s.rgb = testing::random_tensor({3, 480, 640}, 2, 0.0, 1.0);
  s.aux = testing::random_tensor({3, 480, 640}, 3, 0.0, 1.0);
  s.id = "a";
  const PreprocessedSample p = preprocess(s, RunConfig{});
  EXPECT_EQ(p.rgb_large.shape(), (Shape{3, 1024, 1024}));
  EXPECT_EQ(p.rgb_small.shape(), (Shape{3, 384, 384}));
  EXPECT_EQ(p.aux_small.shape(), (Shape{3, 384, 384}));
  EXPECT_TRUE(p.gt_large.empty());
  EXPECT_EQ(p.source_h, 480);
  EXPECT_EQ(p.source_w, 640);
}

TEST(DataIo, ConstantImageNormalisesToConstant) {
  RunConfig cfg;
  cfg.sam_size = 50;
  cfg.sem_size = 20;
  SamplePair s;
  s.rgb = Tensor({3, 33, 47}, 0.5);
  s.aux = Tensor({3, 33, 47}, 0.5);
  const PreprocessedSample p = preprocess(s, cfg);
  for (const Tensor* t : {&p.rgb_large, &p.rgb_small, &p.aux_small}) {
    const int64_t plane = t->dim(1) * t->dim(2);
    for (int64_t c = 0; c < 3; ++c) {
      const double expect = (0.5 - cfg.norm_mean[static_cast<size_t>(c)]) / cfg.norm_std[static_cast<size_t>(c)];
      for (int64_t i = 0; i < plane; ++i) ASSERT_NEAR((*t)[c * plane + i], expect, 1e-12);
    }
  }
}

TEST(DataIo, NearestResizeMatchesBruteForceAndKeepsSinglePixel) {
  for (auto [h, w, oh, ow] : {std::tuple{7, 5, 64, 64}, {64, 48, 10, 13}, {3, 3, 3, 3}}) {
    const Tensor m = testing::random_binary({h, w}, static_cast<uint64_t>(h * 100 + ow));
    const Tensor r = resize_nearest(m, oh, ow);
    for (int64_t y = 0; y < oh; ++y)
      for (int64_t x = 0; x < ow; ++x) {
        // source index = floor((d + 1/2) * in / out), in exact integers
        const int64_t sy = ((2 * y + 1) * h) / (2 * oh);
        const int64_t sx = ((2 * x + 1) * w) / (2 * ow);
        ASSERT_EQ(r.at(y, x), m.at(sy, sx));
      }
  }
  for (int64_t py = 0; py < 9; ++py)
    for (int64_t px = 0; px < 9; ++px) {
      Tensor g({9, 9});
      g.at(py, px) = 1.0;
      EXPECT_GE(foreground(resize_nearest(g, 1024, 1024)), 1);
    }
}

TEST(DataIo, NonFinitePixelsAreRejected) {
  SamplePair s;
  s.rgb = Tensor({3, 8, 8}, 0.5);
  s.aux = Tensor({3, 8, 8}, 0.5);
  s.aux[5] = std::nan("");
  EXPECT_THROW(preprocess(s, RunConfig::toy()), DatasetError);
}

TEST(DataIo, SyntheticDatasetIsDeterministicAndNonDegenerate) {
  const auto a = make_synthetic_dataset(4, 64, 0), b = make_synthetic_dataset(4, 64, 0);
  ASSERT_EQ(a.size(), 4u);
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(a[i].rgb.identical(b[i].rgb));
    EXPECT_TRUE(a[i].aux.identical(b[i].aux));
    EXPECT_TRUE(a[i].gt.identical(b[i].gt));
  }
  const auto one = make_synthetic_dataset(1, 64, 0);
  const double frac = static_cast<double>(foreground(one[0].gt)) / (64.0 * 64.0);
  EXPECT_GT(frac, 0.0);
  EXPECT_LT(frac, 1.0);
  EXPECT_FALSE(make_synthetic_dataset(1, 64, 1)[0].gt.identical(one[0].gt));
}

TEST(DataIo, CorruptionsChangeOnlyTheirModality) {
  const auto clean = make_synthetic_dataset(2, 48, 5);
  const auto dark = make_synthetic_dataset(2, 48, 5, Corruption::rgb_dark);
  const auto noisy = make_synthetic_dataset(2, 48, 5, Corruption::aux_noisy);
  EXPECT_TRUE(dark[0].aux.identical(clean[0].aux));
  EXPECT_TRUE(dark[0].gt.identical(clean[0].gt));
  EXPECT_NEAR(dark[0].rgb[100], 0.2 * clean[0].rgb[100], 1e-12);
  EXPECT_TRUE(noisy[0].rgb.identical(clean[0].rgb));
  EXPECT_FALSE(noisy[0].aux.identical(clean[0].aux));
  EXPECT_EQ(corruption_from_string(to_string(Corruption::aux_noisy)), Corruption::aux_noisy);
}

}  // namespace
}  // namespace sammese
