// SPDX-License-Identifier: Apache-2.0
//
// Automatic prompting: learnable queries refined against the fused semantic
// feature, and mask / box / point prompts derived from the coarse saliency map.
#pragma once

#include <cstdint>
#include <vector>

#include "sammese/autograd.hpp"
#include "sammese/foundation.hpp"
#include "sammese/nn.hpp"

namespace sammese {

class PromptGenerator {
 public:
  /// Parameters live under "prompt_gen.". Queries carry no positional code.
  PromptGenerator(const nn::Builder& b, int64_t sem_channels, int64_t queries, int64_t query_dim,
                  int64_t out_dim, int64_t heads = 1);

  /// f_sem [b, c_sem, h, w] -> P_sem [b, N, out_dim].
  ag::Var forward(const ag::Var& f_sem) const;

  int64_t queries() const { return queries_.dim(0); }

  nn::Conv2d sem_proj;    // 1x1, c_sem -> c_q
  ag::Var queries_;       // [N, c_q]
  nn::Attention cross;    // queries attend to Q_sem
  nn::Attention self;     // over the N tokens
  nn::Linear out;         // c_q -> c_img
};

struct GeometricOptions {
  double threshold = 0.5;
  double min_area_frac = 0.001;
  int64_t max_points = 3;
  bool per_component_boxes = false;
  int64_t mask_size = 0;  // 0 = no mask prompt
};

/// 4-connected foreground component in raster discovery order.
struct Component {
  int64_t area = 0;
  int64_t sum_x = 0, sum_y = 0;
  int64_t x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  std::vector<int64_t> pixels;  // flat indices y * w + x
};

/// Labels the 4-connected components of `mask` ([h, w], nonzero = foreground).
std::vector<Component> connected_components(const std::vector<uint8_t>& mask, int64_t h,
                                            int64_t w);

/// Integer pixel representing a component: the floored centroid when it lies in
/// the component, otherwise the member pixel nearest the exact centroid (ties
/// resolved in raster order).
Point component_point(const Component& c, int64_t w);

/// coarse: [h, w] in [0, 1]. Coordinates are pixels of that map.
GeometricPrompts derive_geometric(const Tensor& coarse, const GeometricOptions& opt);

/// sparse = concat(geometric tokens, P_sem); dense = mask-prompt embedding.
/// Either source may be switched off; P_sem may be undefined.
PromptEmbeddings assemble_decoder_inputs(const ag::Var& p_sem, const GeometricPrompts& geo,
                                         const PromptEncoder& encoder, bool use_geometric = true);

}  // namespace sammese
