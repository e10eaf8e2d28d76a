// SPDX-License-Identifier: Apache-2.0
//
// Multi-modal adapters: low-rank bottleneck adapters with a semantic-gated
// fusion unit, placed beside the attention and MLP sublayers of every frozen
// encoder block.
#pragma once

#include <vector>

#include "sammese/autograd.hpp"
#include "sammese/config.hpp"
#include "sammese/foundation.hpp"
#include "sammese/nn.hpp"

namespace sammese {

/// Parameters of one adapter instance. Members that the variant does not use
/// are left undefined.
struct AdapterParams {
  nn::Linear down;      // f_x: [c, m]
  nn::Linear down_sem;  // aligned semantic tokens: [c, m]
  nn::Conv2d fusion;    // 3x3, m -> m
  nn::Linear up;        // [m, c], zero-initialised

  static AdapterParams make(const nn::Builder& b, const std::string& prefix, int64_t width,
                            int64_t bottleneck, AdapterVariant variant);
  int64_t count() const;
};

/// Learnable entries of one full adapter: c*m + c*m + 9*m*m + m*c plus biases m + m + m + c.
int64_t adapter_param_formula(int64_t width, int64_t bottleneck);

/// relu(f_x W_down) W_up.
ag::Var adapter_plain(const ag::Var& f_x, const nn::Linear& down, const nn::Linear& up);

/// Conv3(x + x * sigmoid(sem)) over the square token grid. x, sem: [b, d, m].
ag::Var fusion_unit(const ag::Var& x_low, const ag::Var& sem_low, const nn::Conv2d& conv);

/// Adapter delta for tokens f_x [b, d, c] given semantic tokens already
/// aligned to the same grid and width.
ag::Var madapter_forward(const ag::Var& f_x, const ag::Var& sem_tokens, const AdapterParams& p,
                         AdapterVariant variant);

/// Resamples f_sem (bilinear) onto the encoder token grid and projects it to
/// the encoder width with a 1x1 conv. Shared by all adapters ("madapter.sem_proj").
class SemanticAlign {
 public:
  SemanticAlign() = default;
  SemanticAlign(const nn::Builder& b, int64_t sem_channels, int64_t width);
  /// f_sem [b, c_sem, h, w] -> tokens [b, grid*grid, width].
  ag::Var align(const ag::Var& f_sem, int64_t grid) const;

  nn::Conv2d proj;
};

/// Convenience overload: aligns f_sem to f_x's grid, then applies the adapter.
ag::Var madapter_forward(const ag::Var& f_x, const ag::Var& f_sem, const SemanticAlign& align,
                         const AdapterParams& p, AdapterVariant variant);

/// All adapters of the encoder, one (attention, MLP) pair per block.
class MAdapterSet {
 public:
  MAdapterSet(const nn::Builder& b, int64_t depth, int64_t width, int64_t bottleneck,
              int64_t sem_channels, AdapterVariant variant);

  bool enabled() const { return variant_ != AdapterVariant::none; }
  AdapterVariant variant() const { return variant_; }

  /// Binds the fused semantic feature and returns hooks for the image encoder.
  std::vector<BlockAdapters> bind(const ag::Var& f_sem, int64_t grid) const;

  std::vector<std::pair<AdapterParams, AdapterParams>> blocks;
  SemanticAlign align;

 private:
  AdapterVariant variant_;
};

}  // namespace sammese
