// SPDX-License-Identifier: Apache-2.0
//
// Paired multi-modal samples: loading from disk, resizing to the two working
// resolutions, and synthetic desk-scale datasets.
#pragma once

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sammese/config.hpp"
#include "sammese/tensor.hpp"

namespace sammese {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SamplePair {
  Tensor rgb;  // [3, h, w] in [0, 1]
  Tensor aux;  // [3, h, w] in [0, 1]; single-channel sources replicated
  Tensor gt;   // [h, w] in {0, 1}; empty when loaded without labels
  std::string id;

  int64_t height() const { return rgb.dim(1); }
  int64_t width() const { return rgb.dim(2); }
};

struct Normalization {
  std::array<double, 3> mean{};
  std::array<double, 3> std{};
};

struct PreprocessedSample {
  Tensor rgb_large;  // [3, S, S]
  Tensor rgb_small;  // [3, s, s]
  Tensor aux_small;  // [3, s, s]
  Tensor gt_large;   // [S, S]; empty when the pair has no labels
  Normalization norm;
  std::string id;
  int64_t source_h = 0, source_w = 0;
};

enum class Corruption { none, rgb_dark, aux_noisy };
Corruption corruption_from_string(const std::string& s);
std::string to_string(Corruption c);

// Image files --------------------------------------------------------------

/// Reads an 8- or 16-bit image as [3, h, w] in [0, 1] (gray replicated).
Tensor read_image(const std::string& path);
/// Reads a label image as a binary [h, w] map (value >= 0.5 of full scale).
Tensor read_mask(const std::string& path);
/// Writes a map in [0, 1] as an 8-bit grayscale PNG (round(v * 255)).
void write_gray_png(const std::string& path, const Tensor& map);
/// Writes a [3, h, w] image in [0, 1] as an 8-bit color PNG.
void write_rgb_png(const std::string& path, const Tensor& img);
/// Quantises to the 8-bit levels a PNG round trip would produce.
Tensor quantize8(const Tensor& map);

// Datasets -----------------------------------------------------------------

/// Stem -> path of the image files directly inside `dir`.
std::map<std::string, std::string> list_image_files(const std::string& dir);

/// Name of the auxiliary-modality directory ("T" or "Depth").
std::string aux_dir_name(Modality m);

/// Loads `root/RGB`, `root/T|Depth` and (when `with_gt`) `root/GT`, matched
/// by file stem and sorted by id.
std::vector<SamplePair> load_dataset(const std::string& root, Modality modality,
                                     bool with_gt = true);

/// Loads one pair; throws DatasetError on size mismatch.
SamplePair load_pair(const std::string& rgb_path, const std::string& aux_path,
                     const std::optional<std::string>& gt_path, const std::string& id);

/// Writes a dataset in the layout read by load_dataset.
void write_dataset(const std::vector<SamplePair>& data, const std::string& root,
                   Modality modality);

// Preprocessing ------------------------------------------------------------

/// Bilinear resize of [c, h, w] (half-pixel centres).
Tensor resize_image(const Tensor& img, int64_t out_h, int64_t out_w);
/// Nearest-neighbour resize of [h, w]; source index floor((d + 0.5) * in / out).
Tensor resize_nearest(const Tensor& map, int64_t out_h, int64_t out_w);
/// Per-channel (x - mean) / std on [3, h, w].
Tensor normalize(const Tensor& img, const Normalization& norm);

PreprocessedSample preprocess(const SamplePair& s, const RunConfig& cfg);

// Synthetic data -----------------------------------------------------------

/// Random filled shapes rendered consistently into rgb, aux and gt. A pure
/// function of its arguments.
std::vector<SamplePair> make_synthetic_dataset(int64_t n, int64_t size, uint64_t seed,
                                               Corruption corruption = Corruption::none);

}  // namespace sammese
