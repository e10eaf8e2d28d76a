// SPDX-License-Identifier: Apache-2.0
#include "sammese/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "sammese/data_io.hpp"

namespace fs = std::filesystem;

namespace sammese {

namespace {

constexpr double kEps = 2.220446049250313e-16;

void require_pair(const Tensor& map, const Tensor& gt, const char* what) {
  if (map.rank() != 2 || map.shape() != gt.shape()) {
    throw ShapeError(std::string(what) + ": map " + shape_str(map.shape()) + " vs GT " +
                     shape_str(gt.shape()));
  }
}

/// Matlab-style round: halves away from zero.
int64_t round_half_away(double v) { return static_cast<int64_t>(std::round(v)); }

double object_score(const std::vector<double>& vals) {
  if (vals.empty()) return 0.0;
  const double n = static_cast<double>(vals.size());
  const double x = std::accumulate(vals.begin(), vals.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : vals) ss += (v - x) * (v - x);
  const double sigma = vals.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

double s_object(const Tensor& map, const Tensor& gt) {
  std::vector<double> fg, bg;
  for (int64_t i = 0; i < gt.numel(); ++i) {
    if (gt[i] > 0.5) fg.push_back(map[i]);
    else bg.push_back(1.0 - map[i]);
  }
  const double u = static_cast<double>(fg.size()) / static_cast<double>(gt.numel());
  return u * object_score(fg) + (1.0 - u) * object_score(bg);
}

/// SSIM-style similarity of one quadrant [y0, y1) x [x0, x1).
double quadrant_ssim(const Tensor& map, const Tensor& gt, int64_t y0, int64_t y1, int64_t x0,
                     int64_t x1) {
  const int64_t n = (y1 - y0) * (x1 - x0);
  if (n <= 0) return 0.0;
  double sx = 0, sy = 0;
  for (int64_t y = y0; y < y1; ++y)
    for (int64_t x = x0; x < x1; ++x) {
      sx += map.at(y, x);
      sy += gt.at(y, x);
    }
  const double nd = static_cast<double>(n);
  const double mx = sx / nd, my = sy / nd;
  double vx = 0, vy = 0, cxy = 0;
  for (int64_t y = y0; y < y1; ++y)
    for (int64_t x = x0; x < x1; ++x) {
      const double dx = map.at(y, x) - mx, dy = gt.at(y, x) - my;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
  const double denom = nd - 1.0 + kEps;
  vx /= denom;
  vy /= denom;
  cxy /= denom;
  const double a = 4.0 * mx * my * cxy;
  const double b = (mx * mx + my * my) * (vx + vy);
  if (a != 0.0) return a / (b + kEps);
  if (b == 0.0) return 1.0;
  return 0.0;
}

double s_region(const Tensor& map, const Tensor& gt) {
  const int64_t h = gt.dim(0), w = gt.dim(1);
  double total = 0, wx = 0, wy = 0;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double g = gt.at(y, x);
      total += g;
      wx += g * static_cast<double>(x + 1);
      wy += g * static_cast<double>(y + 1);
    }
  // 1-based split: the left / top parts hold X columns / Y rows.
  const int64_t cx = round_half_away(wx / total);
  const int64_t cy = round_half_away(wy / total);
  const double area = static_cast<double>(h * w);
  const double w1 = static_cast<double>(cx * cy) / area;
  const double w2 = static_cast<double>((w - cx) * cy) / area;
  const double w3 = static_cast<double>(cx * (h - cy)) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * quadrant_ssim(map, gt, 0, cy, 0, cx) + w2 * quadrant_ssim(map, gt, 0, cy, cx, w) +
         w3 * quadrant_ssim(map, gt, cy, h, 0, cx) + w4 * quadrant_ssim(map, gt, cy, h, cx, w);
}

/// Foreground / background counts of the GT per quantised level.
struct LevelHistogram {
  std::array<int64_t, 256> fg{}, bg{};
  int64_t n_fg = 0, n = 0;
};

LevelHistogram histogram(const Tensor& map, const Tensor& gt) {
  LevelHistogram hist;
  const auto q = quantize_levels(map);
  for (size_t i = 0; i < q.size(); ++i) {
    const bool g = gt[static_cast<int64_t>(i)] > 0.5;
    (g ? hist.fg : hist.bg)[static_cast<size_t>(q[i])] += 1;
    hist.n_fg += g;
  }
  hist.n = static_cast<int64_t>(q.size());
  return hist;
}

double enhanced(double a, double b) {
  const double align = 2.0 * a * b / (a * a + b * b + kEps);
  return (align + 1.0) * (align + 1.0) / 4.0;
}

/// E-measure of a binary prediction given its (pred, gt) contingency counts.
double e_from_counts(int64_t tp, int64_t fp, int64_t fn, int64_t tn) {
  const int64_t n = tp + fp + fn + tn;
  const int64_t n_gt = tp + fn;
  const int64_t n_pred = tp + fp;
  const double nd = static_cast<double>(n);
  if (n_gt == 0) return static_cast<double>(n - n_pred) / nd;
  if (n_gt == n) return static_cast<double>(n_pred) / nd;
  const double mu_g = static_cast<double>(n_gt) / nd;
  const double mu_p = static_cast<double>(n_pred) / nd;
  const double sum = static_cast<double>(tp) * enhanced(1.0 - mu_g, 1.0 - mu_p) +
                     static_cast<double>(fp) * enhanced(-mu_g, 1.0 - mu_p) +
                     static_cast<double>(fn) * enhanced(1.0 - mu_g, -mu_p) +
                     static_cast<double>(tn) * enhanced(-mu_g, -mu_p);
  return sum / nd;
}

}  // namespace

double ThresholdCurve::max() const {
  return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

double ThresholdCurve::mean() const {
  return values.empty() ? 0.0
                        : std::accumulate(values.begin(), values.end(), 0.0) /
                              static_cast<double>(values.size());
}

std::vector<int> quantize_levels(const Tensor& map) {
  std::vector<int> q(static_cast<size_t>(map.numel()));
  for (int64_t i = 0; i < map.numel(); ++i) {
    q[static_cast<size_t>(i)] = static_cast<int>(std::lround(std::clamp(map[i], 0.0, 1.0) * 255.0));
  }
  return q;
}

double mae(const Tensor& map, const Tensor& gt) {
  require_pair(map, gt, "mae");
  double s = 0.0;
  for (int64_t i = 0; i < map.numel(); ++i) s += std::abs(map[i] - gt[i]);
  return s / static_cast<double>(map.numel());
}

ThresholdCurve f_measure_curve(const Tensor& map, const Tensor& gt, double beta_sq) {
  require_pair(map, gt, "f_measure");
  const LevelHistogram h = histogram(map, gt);
  ThresholdCurve c;
  c.values.assign(256, 0.0);
  if (h.n_fg == 0) return c;
  int64_t tp = 0, fp = 0;
  for (int t = 255; t >= 0; --t) {
    tp += h.fg[static_cast<size_t>(t)];
    fp += h.bg[static_cast<size_t>(t)];
    if (tp == 0) continue;
    const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double r = static_cast<double>(tp) / static_cast<double>(h.n_fg);
    const double denom = beta_sq * p + r;
    c.values[static_cast<size_t>(t)] = denom > 0 ? (1.0 + beta_sq) * p * r / denom : 0.0;
  }
  return c;
}

double f_measure(const Tensor& map, const Tensor& gt, double beta_sq) {
  return f_measure_curve(map, gt, beta_sq).max();
}

double s_measure(const Tensor& map, const Tensor& gt, double alpha) {
  require_pair(map, gt, "s_measure");
  double fg = 0.0, mean_map = 0.0;
  for (int64_t i = 0; i < gt.numel(); ++i) {
    fg += gt[i] > 0.5 ? 1.0 : 0.0;
    mean_map += map[i];
  }
  const double n = static_cast<double>(gt.numel());
  fg /= n;
  mean_map /= n;
  if (fg == 0.0) return 1.0 - mean_map;
  if (fg == 1.0) return mean_map;
  const double q = alpha * s_object(map, gt) + (1.0 - alpha) * s_region(map, gt);
  return std::max(0.0, q);
}

double e_measure_binary(const std::vector<uint8_t>& pred, const Tensor& gt) {
  if (static_cast<int64_t>(pred.size()) != gt.numel()) throw ShapeError("e_measure: size mismatch");
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool g = gt[static_cast<int64_t>(i)] > 0.5;
    if (pred[i]) (g ? tp : fp) += 1;
    else (g ? fn : tn) += 1;
  }
  return e_from_counts(tp, fp, fn, tn);
}

ThresholdCurve e_measure_curve(const Tensor& map, const Tensor& gt) {
  require_pair(map, gt, "e_measure");
  const LevelHistogram h = histogram(map, gt);
  ThresholdCurve c;
  c.values.assign(256, 0.0);
  int64_t tp = 0, fp = 0;
  const int64_t n_bg = h.n - h.n_fg;
  for (int t = 255; t >= 0; --t) {
    tp += h.fg[static_cast<size_t>(t)];
    fp += h.bg[static_cast<size_t>(t)];
    c.values[static_cast<size_t>(t)] = e_from_counts(tp, fp, h.n_fg - tp, n_bg - fp);
  }
  return c;
}

double e_measure(const Tensor& map, const Tensor& gt) { return e_measure_curve(map, gt).max(); }

ImageScores score_image(const Tensor& map, const Tensor& gt, const std::string& id) {
  ImageScores s;
  s.id = id;
  s.mae = mae(map, gt);
  const ThresholdCurve f = f_measure_curve(map, gt);
  s.f_max = f.max();
  s.f_mean = f.mean();
  s.s_measure = s_measure(map, gt);
  const ThresholdCurve e = e_measure_curve(map, gt);
  s.e_max = e.max();
  s.e_mean = e.mean();
  s.empty_gt = std::none_of(gt.values().begin(), gt.values().end(), [](double v) { return v > 0.5; });
  return s;
}

EvalResult aggregate(std::vector<ImageScores> per_image) {
  EvalResult r;
  r.per_image = std::move(per_image);
  r.mean.id = "mean";
  if (r.per_image.empty()) return r;
  for (const auto& s : r.per_image) {
    r.mean.mae += s.mae;
    r.mean.f_max += s.f_max;
    r.mean.f_mean += s.f_mean;
    r.mean.s_measure += s.s_measure;
    r.mean.e_max += s.e_max;
    r.mean.e_mean += s.e_mean;
    r.mean.empty_gt = r.mean.empty_gt || s.empty_gt;
  }
  const double k = 1.0 / static_cast<double>(r.per_image.size());
  r.mean.mae *= k;
  r.mean.f_max *= k;
  r.mean.f_mean *= k;
  r.mean.s_measure *= k;
  r.mean.e_max *= k;
  r.mean.e_mean *= k;
  return r;
}

EvalResult evaluate_dataset(const std::string& pred_dir, const std::string& gt_dir) {
  for (const auto& d : {pred_dir, gt_dir}) {
    if (!fs::is_directory(d)) throw DatasetError("missing directory " + d);
  }
  std::map<std::string, std::string> preds, gts;
  auto scan = [](const std::string& dir, std::map<std::string, std::string>& out) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      std::string ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp") {
        out[e.path().stem().string()] = e.path().string();
      }
    }
  };
  scan(pred_dir, preds);
  scan(gt_dir, gts);
  if (gts.empty()) throw DatasetError("no ground-truth images in " + gt_dir);
  std::vector<ImageScores> scores;
  for (const auto& [id, gt_path] : gts) {
    const auto it = preds.find(id);
    if (it == preds.end()) throw DatasetError("missing prediction for '" + id + "' in " + pred_dir);
    const Tensor gt = read_mask(gt_path);
    const Tensor img = read_image(it->second);
    Tensor map({img.dim(1), img.dim(2)});
    std::copy_n(img.data(), map.numel(), map.data());
    if (map.shape() != gt.shape()) {
      const Tensor r = resize_image(map.reshaped({1, map.dim(0), map.dim(1)}), gt.dim(0), gt.dim(1));
      map = r.reshaped({gt.dim(0), gt.dim(1)});
    }
    scores.push_back(score_image(map, gt, id));
  }
  return aggregate(std::move(scores));
}

void write_eval_csv(const std::string& path, const EvalResult& r) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + path);
  out << "id,s_measure,e_max,e_mean,f_max,f_mean,mae,empty_gt\n" << std::setprecision(10);
  auto row = [&](const ImageScores& s) {
    out << s.id << ',' << s.s_measure << ',' << s.e_max << ',' << s.e_mean << ',' << s.f_max << ','
        << s.f_mean << ',' << s.mae << ',' << (s.empty_gt ? 1 : 0) << '\n';
  };
  for (const auto& s : r.per_image) row(s);
  row(r.mean);
}

std::string format_eval_table(const EvalResult& r, const std::string& label) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "Dataset" << std::right << std::setw(8) << "S_m"
     << std::setw(8) << "maxE" << std::setw(8) << "meanE" << std::setw(8) << "maxF"
     << std::setw(8) << "meanF" << std::setw(8) << "MAE" << '\n';
  os << std::fixed << std::setprecision(3) << std::left << std::setw(16) << label << std::right
     << std::setw(8) << r.mean.s_measure << std::setw(8) << r.mean.e_max << std::setw(8)
     << r.mean.e_mean << std::setw(8) << r.mean.f_max << std::setw(8) << r.mean.f_mean
     << std::setw(8) << r.mean.mae << '\n';
  if (r.mean.empty_gt) os << "note: at least one GT has no foreground; its F-measure is 0\n";
  return os.str();
}

}  // namespace sammese
