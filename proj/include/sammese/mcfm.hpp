// SPDX-License-Identifier: Apache-2.0
//
// Multi-modal complementary fusion: integrates the top-level RGB and auxiliary
// (thermal or depth) features into the fused semantic feature and predicts the
// coarse saliency map from it.
#pragma once

#include "sammese/autograd.hpp"
#include "sammese/config.hpp"
#include "sammese/nn.hpp"

namespace sammese {

class Mcfm {
 public:
  /// `channels` is the width of the selected pyramid level; parameters live
  /// under "mcfm.".
  Mcfm(const nn::Builder& b, int64_t channels, int64_t heads, McfmVariant variant);

  /// concat along channels, then 3x3 conv 2c -> c.
  ag::Var fuse_initial(const ag::Var& f_rgb, const ag::Var& f_aux) const;
  /// Single (or multi) head cross-attention with queries from f_m and keys /
  /// values from f_mul over flattened positions, plus a residual of f_m.
  ag::Var enhance_modality(const ag::Var& f_m, const ag::Var& f_mul, bool aux) const;
  /// concat along channels, then an independent 3x3 conv 2c -> c.
  ag::Var fuse_final(const ag::Var& f_rgb_hat, const ag::Var& f_aux_hat) const;

  /// Full module per the configured variant; returns f_sem.
  ag::Var forward(const ag::Var& f_rgb, const ag::Var& f_aux) const;

  int64_t channels() const { return channels_; }
  McfmVariant variant() const { return variant_; }

  nn::Conv2d conv_initial;
  nn::Conv2d conv_final;      // absent for no_mcfm
  nn::Attention attn_rgb;     // absent for no_mcfm
  nn::Attention attn_aux;     // absent for no_mcfm
  nn::Attention refine_mul;   // complex_design only
  nn::Attention refine_sem;   // complex_design only

 private:
  ag::Var self_refine(const nn::Attention& a, const ag::Var& x) const;
  int64_t channels_;
  McfmVariant variant_;
};

/// 1x1 conv c -> 1, bilinear upsample, sigmoid. Parameters under "coarse_head.".
class CoarseHead {
 public:
  CoarseHead(const nn::Builder& b, int64_t channels);
  /// f_sem: [b, c, h, w] -> [b, 1, out_size, out_size] in [0, 1].
  ag::Var forward(const ag::Var& f_sem, int64_t out_size) const;

  nn::Conv2d proj;
};

}  // namespace sammese
