// SPDX-License-Identifier: Apache-2.0
#include "sammese/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sammese/kernels.hpp"
#include "sammese/rng.hpp"

namespace fs = std::filesystem;

namespace sammese {

namespace {

const std::set<std::string> kImageExt = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"};

double full_scale(int depth) {
  switch (depth) {
    case CV_8U: return 255.0;
    case CV_16U: return 65535.0;
    case CV_32F:
    case CV_64F: return 1.0;
    default: throw DatasetError("unsupported image bit depth");
  }
}

cv::Mat read_raw(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR);
  if (m.empty()) throw DatasetError("cannot decode image " + path);
  return m;
}

/// Stem -> path for the image files of one directory.
std::map<std::string, std::string> list_images(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (!kImageExt.count(ext)) continue;
    const std::string stem = e.path().stem().string();
    if (out.count(stem)) throw DatasetError("duplicate image id '" + stem + "' in " + dir.string());
    out[stem] = e.path().string();
  }
  return out;
}

void check_finite(const Tensor& t, const std::string& what, const std::string& id) {
  if (!t.all_finite()) throw DatasetError("non-finite pixel values in " + what + " of '" + id + "'");
}

}  // namespace

Corruption corruption_from_string(const std::string& s) {
  if (s == "none") return Corruption::none;
  if (s == "rgb_dark") return Corruption::rgb_dark;
  if (s == "aux_noisy") return Corruption::aux_noisy;
  throw std::invalid_argument("unknown corruption mode '" + s + "'");
}

std::string to_string(Corruption c) {
  switch (c) {
    case Corruption::none: return "none";
    case Corruption::rgb_dark: return "rgb_dark";
    case Corruption::aux_noisy: return "aux_noisy";
  }
  return "?";
}

Tensor read_image(const std::string& path) {
  const cv::Mat m = read_raw(path);
  const double scale = full_scale(m.depth());
  const int64_t h = m.rows, w = m.cols;
  Tensor out({3, h, w});
  cv::Mat f;
  m.convertTo(f, CV_64F, 1.0 / scale);
  const int ch = f.channels();
  if (ch != 1 && ch != 3 && ch != 4) throw DatasetError(path + ": unsupported channel count");
  for (int64_t y = 0; y < h; ++y) {
    const double* row = f.ptr<double>(static_cast<int>(y));
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        // OpenCV stores BGR(A).
        const double v = ch == 1 ? row[x] : row[x * ch + (2 - c)];
        out.at(c, y, x) = v;
      }
    }
  }
  return out;
}

Tensor read_mask(const std::string& path) {
  cv::Mat m = read_raw(path);
  const double scale = full_scale(m.depth());
  if (m.channels() != 1) {
    cv::Mat g;
    cv::cvtColor(m, g, m.channels() == 4 ? cv::COLOR_BGRA2GRAY : cv::COLOR_BGR2GRAY);
    m = g;
  }
  cv::Mat f;
  m.convertTo(f, CV_64F, 1.0 / scale);
  Tensor out({f.rows, f.cols});
  for (int y = 0; y < f.rows; ++y) {
    const double* row = f.ptr<double>(y);
    for (int x = 0; x < f.cols; ++x) out.at(y, x) = row[x] >= 0.5 ? 1.0 : 0.0;
  }
  return out;
}

Tensor quantize8(const Tensor& map) {
  Tensor q(map.shape());
  for (int64_t i = 0; i < map.numel(); ++i) {
    q[i] = std::round(std::clamp(map[i], 0.0, 1.0) * 255.0) / 255.0;
  }
  return q;
}

void write_gray_png(const std::string& path, const Tensor& map) {
  if (map.rank() != 2) throw ShapeError("write_gray_png: expected [h, w], got " + shape_str(map.shape()));
  cv::Mat m(static_cast<int>(map.dim(0)), static_cast<int>(map.dim(1)), CV_8UC1);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x)
      m.at<uint8_t>(y, x) = static_cast<uint8_t>(std::lround(std::clamp(map.at(y, x), 0.0, 1.0) * 255.0));
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  if (!cv::imwrite(path, m)) throw DatasetError("cannot write " + path);
}

void write_rgb_png(const std::string& path, const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("write_rgb_png: expected [3, h, w]");
  cv::Mat m(static_cast<int>(img.dim(1)), static_cast<int>(img.dim(2)), CV_8UC3);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x)
      for (int c = 0; c < 3; ++c)
        m.at<cv::Vec3b>(y, x)[2 - c] =
            static_cast<uint8_t>(std::lround(std::clamp(img.at(c, y, x), 0.0, 1.0) * 255.0));
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  if (!cv::imwrite(path, m)) throw DatasetError("cannot write " + path);
}

std::map<std::string, std::string> list_image_files(const std::string& dir) {
  return list_images(fs::path(dir));
}

std::string aux_dir_name(Modality m) { return m == Modality::thermal ? "T" : "Depth"; }

SamplePair load_pair(const std::string& rgb_path, const std::string& aux_path,
                     const std::optional<std::string>& gt_path, const std::string& id) {
  SamplePair s;
  s.id = id;
  s.rgb = read_image(rgb_path);
  s.aux = read_image(aux_path);
  if (s.aux.shape() != s.rgb.shape()) {
    throw DatasetError("size mismatch for '" + id + "': RGB " + shape_str(s.rgb.shape()) +
                       " vs auxiliary " + shape_str(s.aux.shape()));
  }
  if (gt_path) {
    s.gt = read_mask(*gt_path);
    if (s.gt.dim(0) != s.rgb.dim(1) || s.gt.dim(1) != s.rgb.dim(2)) {
      throw DatasetError("size mismatch for '" + id + "': RGB " + shape_str(s.rgb.shape()) +
                         " vs GT " + shape_str(s.gt.shape()));
    }
  }
  check_finite(s.rgb, "RGB", id);
  check_finite(s.aux, "auxiliary image", id);
  return s;
}

std::vector<SamplePair> load_dataset(const std::string& root, Modality modality, bool with_gt) {
  const fs::path base(root);
  const fs::path rgb_dir = base / "RGB";
  const fs::path aux_dir = base / aux_dir_name(modality);
  const fs::path gt_dir = base / "GT";
  for (const auto& d : with_gt ? std::vector<fs::path>{rgb_dir, aux_dir, gt_dir}
                               : std::vector<fs::path>{rgb_dir, aux_dir}) {
    if (!fs::is_directory(d)) throw DatasetError("missing dataset directory " + d.string());
  }
  const auto rgb = list_images(rgb_dir);
  const auto aux = list_images(aux_dir);
  const auto gt = with_gt ? list_images(gt_dir) : std::map<std::string, std::string>{};

  auto orphan = [&](const std::map<std::string, std::string>& from, const std::string& missing) {
    for (const auto& [id, path] : from) {
      if (!rgb.count(id) || !aux.count(id) || (with_gt && !gt.count(id))) {
        throw DatasetError("orphan sample '" + id + "' (" + path + "): no counterpart in " + missing);
      }
    }
  };
  orphan(rgb, aux_dir.filename().string() + (with_gt ? " or GT" : ""));
  orphan(aux, "RGB" + std::string(with_gt ? " or GT" : ""));
  if (with_gt) orphan(gt, "RGB or " + aux_dir.filename().string());

  std::vector<SamplePair> out;
  out.reserve(rgb.size());
  for (const auto& [id, path] : rgb) {
    out.push_back(load_pair(path, aux.at(id),
                            with_gt ? std::optional<std::string>(gt.at(id)) : std::nullopt, id));
  }
  return out;
}

void write_dataset(const std::vector<SamplePair>& data, const std::string& root,
                   Modality modality) {
  const fs::path base(root);
  for (const auto& s : data) {
    write_rgb_png((base / "RGB" / (s.id + ".png")).string(), s.rgb);
    Tensor aux_gray({s.height(), s.width()});
    std::copy_n(s.aux.data(), aux_gray.numel(), aux_gray.data());
    write_gray_png((base / aux_dir_name(modality) / (s.id + ".png")).string(), aux_gray);
    if (!s.gt.empty()) write_gray_png((base / "GT" / (s.id + ".png")).string(), s.gt);
  }
}

Tensor resize_image(const Tensor& img, int64_t out_h, int64_t out_w) {
  if (img.rank() != 3) throw ShapeError("resize_image: expected [c, h, w], got " + shape_str(img.shape()));
  Tensor out({img.dim(0), out_h, out_w});
  kernels::resize_bilinear_forward({img.dim(0), img.dim(1), img.dim(2), out_h, out_w}, img.data(),
                                   out.data());
  return out;
}

Tensor resize_nearest(const Tensor& map, int64_t out_h, int64_t out_w) {
  if (map.rank() != 2) throw ShapeError("resize_nearest: expected [h, w], got " + shape_str(map.shape()));
  const int64_t in_h = map.dim(0), in_w = map.dim(1);
  Tensor out({out_h, out_w});
  for (int64_t y = 0; y < out_h; ++y) {
    const int64_t sy = std::min(in_h - 1, ((2 * y + 1) * in_h) / (2 * out_h));
    for (int64_t x = 0; x < out_w; ++x) {
      const int64_t sx = std::min(in_w - 1, ((2 * x + 1) * in_w) / (2 * out_w));
      out.at(y, x) = map.at(sy, sx);
    }
  }
  return out;
}

Tensor normalize(const Tensor& img, const Normalization& norm) {
  if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("normalize: expected [3, h, w]");
  Tensor out(img.shape());
  const int64_t plane = img.dim(1) * img.dim(2);
  for (int64_t c = 0; c < 3; ++c) {
    const double m = norm.mean[static_cast<size_t>(c)];
    const double s = norm.std[static_cast<size_t>(c)];
    for (int64_t i = 0; i < plane; ++i) out[c * plane + i] = (img[c * plane + i] - m) / s;
  }
  return out;
}

PreprocessedSample preprocess(const SamplePair& s, const RunConfig& cfg) {
  if (s.rgb.rank() != 3 || s.rgb.dim(0) != 3 || s.aux.shape() != s.rgb.shape()) {
    throw ShapeError("preprocess: '" + s.id + "' has inconsistent image shapes");
  }
  check_finite(s.rgb, "RGB", s.id);
  check_finite(s.aux, "auxiliary image", s.id);
  if (!s.gt.empty()) check_finite(s.gt, "GT", s.id);

  PreprocessedSample p;
  p.id = s.id;
  p.source_h = s.height();
  p.source_w = s.width();
  p.norm.mean = cfg.norm_mean;
  p.norm.std = cfg.norm_std;
  const int64_t big = cfg.sam_size, small = cfg.sem_size;
  p.rgb_large = normalize(resize_image(s.rgb, big, big), p.norm);
  p.rgb_small = normalize(resize_image(s.rgb, small, small), p.norm);
  p.aux_small = normalize(resize_image(s.aux, small, small), p.norm);
  if (!s.gt.empty()) p.gt_large = resize_nearest(s.gt, big, big);
  return p;
}

std::vector<SamplePair> make_synthetic_dataset(int64_t n, int64_t size, uint64_t seed,
                                               Corruption corruption) {
  if (n < 1) throw std::invalid_argument("make_synthetic_dataset: n must be >= 1");
  if (size < 32) throw std::invalid_argument("make_synthetic_dataset: size must be >= 32");
  std::vector<SamplePair> out;
  out.reserve(static_cast<size_t>(n));
  const double sz = static_cast<double>(size);
  for (int64_t i = 0; i < n; ++i) {
    Rng rng(Rng::derive(seed, "synthetic/" + std::to_string(i)));
    // separate stream so a corruption leaves the other modality untouched
    Rng noise(Rng::derive(seed, "synthetic-noise/" + std::to_string(i)));
    struct Shape2D {
      bool ellipse;
      double cx, cy, rx, ry;
    };
    std::vector<Shape2D> shapes;
    const int64_t count = 1 + rng.below(2);
    for (int64_t k = 0; k < count; ++k) {
      Shape2D sh;
      sh.ellipse = rng.uniform() < 0.5;
      sh.rx = rng.uniform(0.12, 0.26) * sz;
      sh.ry = rng.uniform(0.12, 0.26) * sz;
      sh.cx = rng.uniform(0.3, 0.7) * sz;
      sh.cy = rng.uniform(0.3, 0.7) * sz;
      shapes.push_back(sh);
    }
    std::array<double, 3> bg{}, fg{};
    for (size_t c = 0; c < 3; ++c) {
      bg[c] = rng.uniform(0.1, 0.4);
      fg[c] = rng.uniform(0.6, 0.95);
    }
    const double fx = rng.uniform(1.0, 3.0), fy = rng.uniform(1.0, 3.0), phase = rng.uniform(0.0, 6.28);

    SamplePair s;
    s.id = "syn" + std::to_string(i);
    s.rgb = Tensor({3, size, size});
    s.aux = Tensor({3, size, size});
    s.gt = Tensor({size, size});
    for (int64_t y = 0; y < size; ++y) {
      for (int64_t x = 0; x < size; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        bool inside = false;
        for (const auto& sh : shapes) {
          const double dx = (px - sh.cx) / sh.rx, dy = (py - sh.cy) / sh.ry;
          inside = inside || (sh.ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0);
        }
        s.gt.at(y, x) = inside ? 1.0 : 0.0;
        const double texture = 0.05 * std::sin(fx * px / sz * 6.28 + phase) * std::cos(fy * py / sz * 6.28);
        for (int64_t c = 0; c < 3; ++c) {
          const double base = inside ? fg[static_cast<size_t>(c)] : bg[static_cast<size_t>(c)] + texture;
          s.rgb.at(c, y, x) = base + rng.uniform(-0.02, 0.02);
        }
        double a = (inside ? 0.85 : 0.15) + rng.uniform(-0.03, 0.03);
        if (corruption == Corruption::aux_noisy) a = 0.5 * a + 0.5 * noise.uniform();
        for (int64_t c = 0; c < 3; ++c) s.aux.at(c, y, x) = a;
      }
    }
    if (corruption == Corruption::rgb_dark) {
      for (int64_t k = 0; k < s.rgb.numel(); ++k) s.rgb[k] *= 0.2;
    }
    for (int64_t k = 0; k < s.rgb.numel(); ++k) {
      s.rgb[k] = std::clamp(s.rgb[k], 0.0, 1.0);
      s.aux[k] = std::clamp(s.aux[k], 0.0, 1.0);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace sammese
