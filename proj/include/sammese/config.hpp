// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sammese {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Modality { thermal, depth };
enum class Backend { stub, pretrained };
/// Fusion ablations: full module, plain concat+conv fusion, extra self-attention.
enum class McfmVariant { full, no_mcfm, complex_design };
/// Adapter ablations.
enum class AdapterVariant { full, none, no_fusion, adapter_fx, adapter_fsem };

std::string to_string(Modality m);
std::string to_string(Backend b);
std::string to_string(McfmVariant v);
std::string to_string(AdapterVariant v);

/// Every tunable of a run. Defaults are the full-size training setup; the
/// small dims live in toy().
struct RunConfig {
  // data
  std::string train_root;
  std::string test_root;
  Modality modality = Modality::thermal;
  std::string augmentation = "none";
  std::array<double, 3> norm_mean{0.485, 0.456, 0.406};
  std::array<double, 3> norm_std{0.229, 0.224, 0.225};

  // working resolutions
  int64_t sam_size = 1024;
  int64_t sem_size = 384;

  // foundation backend
  Backend backend = Backend::stub;
  std::string pretrained_weights;
  int64_t patch_size = 16;
  int64_t encoder_width = 32;
  int64_t encoder_depth = 2;
  int64_t encoder_heads = 2;
  int64_t embed_dim = 32;
  int64_t decoder_heads = 2;
  int64_t sem_stem_stride = 4;
  std::array<int64_t, 4> sem_widths{16, 32, 64, 128};

  // model
  int64_t queries = 30;
  int64_t query_dim = 32;
  int64_t bottleneck = 0;  // 0 selects encoder_width / 4
  int64_t mcfm_heads = 1;
  int64_t feature_level = 4;
  McfmVariant mcfm_variant = McfmVariant::full;
  AdapterVariant adapter_variant = AdapterVariant::full;
  bool semantic_prompts = true;
  bool geometric_prompts = true;

  // geometric prompt derivation
  double prompt_threshold = 0.5;
  double min_area_frac = 0.001;
  int64_t max_points = 3;
  bool per_component_boxes = false;

  // optimisation
  double lr = 1e-5;
  int64_t batch = 2;
  int64_t epochs = 100;
  int64_t max_steps = 0;  // 0 = no cap
  uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-2;
  double bce_eps = 1e-7;
  double dice_smooth = 1.0;
  double weight_main = 1.0;
  double weight_coarse = 1.0;

  // outputs
  std::string ckpt;
  std::string out;

  int64_t effective_bottleneck() const {
    return bottleneck > 0 ? bottleneck : std::max<int64_t>(1, encoder_width / 4);
  }
  int64_t encoder_grid() const { return sam_size / patch_size; }
  int64_t mask_prompt_size() const { return 4 * encoder_grid(); }
  /// Spatial size of pyramid level `level` (1-based).
  int64_t pyramid_size(int64_t level) const {
    return sem_size / (sem_stem_stride << (level - 1));
  }

  /// Assigns one `key = value` setting; throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  /// Parses a flat `key = value` file (`#` starts a comment) over the current values.
  void load_file(const std::string& path);
  void load_text(const std::string& text, const std::string& origin = "<text>");
  /// Canonical `key = value` dump of every field.
  std::string to_text() const;

  /// Throws ConfigError when the settings are inconsistent.
  void validate() const;

  /// FNV-1a over every setting that changes parameter shapes or model wiring.
  uint64_t architecture_hash() const;
  std::string architecture_text() const;

  /// Small dimensions that train in seconds on one core.
  static RunConfig toy();
  /// ViT-B / Swin-B widths used with converted pretrained weights.
  static RunConfig pretrained_dims();
};

}  // namespace sammese
