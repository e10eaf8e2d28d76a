// SPDX-License-Identifier: Apache-2.0
//
// Salient object detection metrics. Maps are [h, w] in [0, 1]; ground truth is
// binary. Threshold sweeps run over the 256 levels of the 8-bit quantised map.
#pragma once

#include <string>
#include <vector>

#include "sammese/tensor.hpp"

namespace sammese {

struct ThresholdCurve {
  std::vector<double> values;  // one per threshold 0..255
  double max() const;
  double mean() const;
};

/// round(clamp(m, 0, 1) * 255) per pixel.
std::vector<int> quantize_levels(const Tensor& map);

double mae(const Tensor& map, const Tensor& gt);

/// Per-threshold F-beta with prediction q >= t. Zero divisions give 0 and a GT
/// without foreground gives 0 at every threshold.
ThresholdCurve f_measure_curve(const Tensor& map, const Tensor& gt, double beta_sq = 0.3);
double f_measure(const Tensor& map, const Tensor& gt, double beta_sq = 0.3);

/// Structure measure: alpha * object + (1 - alpha) * region similarity.
double s_measure(const Tensor& map, const Tensor& gt, double alpha = 0.5);

/// Enhanced alignment of a binary prediction with the GT, averaged over pixels.
double e_measure_binary(const std::vector<uint8_t>& pred, const Tensor& gt);
ThresholdCurve e_measure_curve(const Tensor& map, const Tensor& gt);
double e_measure(const Tensor& map, const Tensor& gt);

struct ImageScores {
  std::string id;
  double mae = 0, f_max = 0, f_mean = 0, s_measure = 0, e_max = 0, e_mean = 0;
  bool empty_gt = false;  // F-measure fell back to 0
};

struct EvalResult {
  std::vector<ImageScores> per_image;
  ImageScores mean;  // arithmetic mean over images
};

ImageScores score_image(const Tensor& map, const Tensor& gt, const std::string& id = {});
EvalResult aggregate(std::vector<ImageScores> per_image);

/// Pairs predictions with ground truth by file stem. Predictions of another
/// size are resized bilinearly to the GT. A GT without prediction is an error.
EvalResult evaluate_dataset(const std::string& pred_dir, const std::string& gt_dir);

/// CSV with a header and one row per image plus a final "mean" row.
void write_eval_csv(const std::string& path, const EvalResult& r);
/// Fixed-width table of the dataset means (S, maxE, maxF, MAE order).
std::string format_eval_table(const EvalResult& r, const std::string& label);

}  // namespace sammese
