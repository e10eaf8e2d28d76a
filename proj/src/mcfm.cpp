// SPDX-License-Identifier: Apache-2.0
#include "sammese/mcfm.hpp"

namespace sammese {

namespace {

void require_pair(const ag::Var& a, const ag::Var& b, const char* op) {
  if (a.value().rank() != 4 || a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": expected matching [b, c, h, w] inputs, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
}

}  // namespace

Mcfm::Mcfm(const nn::Builder& b, int64_t channels, int64_t heads, McfmVariant variant)
    : channels_(channels), variant_(variant) {
  conv_initial = nn::Conv2d::make(b, "mcfm.conv_initial", 2 * channels, channels, 3);
  if (variant == McfmVariant::no_mcfm) return;
  attn_rgb = nn::Attention::make(b, "mcfm.attn_rgb", channels, channels, channels, heads, false);
  attn_aux = nn::Attention::make(b, "mcfm.attn_aux", channels, channels, channels, heads, false);
  conv_final = nn::Conv2d::make(b, "mcfm.conv_final", 2 * channels, channels, 3);
  if (variant == McfmVariant::complex_design) {
    refine_mul =
        nn::Attention::make(b, "mcfm.refine_mul", channels, channels, channels, heads, false);
    refine_sem =
        nn::Attention::make(b, "mcfm.refine_sem", channels, channels, channels, heads, false);
  }
}

ag::Var Mcfm::fuse_initial(const ag::Var& f_rgb, const ag::Var& f_aux) const {
  require_pair(f_rgb, f_aux, "fuse_initial");
  if (f_rgb.dim(1) != channels_) throw ShapeError("fuse_initial: channel width mismatch");
  return conv_initial(ag::concat1(f_rgb, f_aux));
}

ag::Var Mcfm::enhance_modality(const ag::Var& f_m, const ag::Var& f_mul, bool aux) const {
  require_pair(f_m, f_mul, "enhance_modality");
  if (!attn_rgb.q.weight.defined()) throw std::logic_error("enhance_modality: variant has no attention");
  const nn::Attention& attn = aux ? attn_aux : attn_rgb;
  const ag::Var q = ag::grid_to_tokens(f_m);
  const ag::Var kv = ag::grid_to_tokens(f_mul);
  const ag::Var out = ag::add(q, attn(q, kv));
  return ag::tokens_to_grid(out, f_m.dim(2), f_m.dim(3));
}

ag::Var Mcfm::fuse_final(const ag::Var& f_rgb_hat, const ag::Var& f_aux_hat) const {
  require_pair(f_rgb_hat, f_aux_hat, "fuse_final");
  if (!conv_final.weight.defined()) throw std::logic_error("fuse_final: variant has no final fusion");
  return conv_final(ag::concat1(f_rgb_hat, f_aux_hat));
}

ag::Var Mcfm::self_refine(const nn::Attention& a, const ag::Var& x) const {
  const ag::Var t = ag::grid_to_tokens(x);
  return ag::tokens_to_grid(ag::add(t, a(t, t)), x.dim(2), x.dim(3));
}

ag::Var Mcfm::forward(const ag::Var& f_rgb, const ag::Var& f_aux) const {
  ag::Var f_mul = fuse_initial(f_rgb, f_aux);
  if (variant_ == McfmVariant::no_mcfm) return f_mul;
  if (variant_ == McfmVariant::complex_design) f_mul = self_refine(refine_mul, f_mul);
  const ag::Var rgb_hat = enhance_modality(f_rgb, f_mul, false);
  const ag::Var aux_hat = enhance_modality(f_aux, f_mul, true);
  ag::Var f_sem = fuse_final(rgb_hat, aux_hat);
  if (variant_ == McfmVariant::complex_design) f_sem = self_refine(refine_sem, f_sem);
  return f_sem;
}

CoarseHead::CoarseHead(const nn::Builder& b, int64_t channels)
    : proj(nn::Conv2d::make(b, "coarse_head.proj", channels, 1, 1, 1, 0)) {}

ag::Var CoarseHead::forward(const ag::Var& f_sem, int64_t out_size) const {
  if (f_sem.value().rank() != 4) throw ShapeError("coarse_saliency: expected [b, c, h, w]");
  if (out_size < f_sem.dim(2) || out_size < f_sem.dim(3)) {
    throw ShapeError("coarse_saliency: output size " + std::to_string(out_size) +
                     " smaller than the feature map");
  }
  return ag::sigmoid(ag::resize_bilinear(proj(f_sem), out_size, out_size));
}

}  // namespace sammese
