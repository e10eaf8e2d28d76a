// SPDX-License-Identifier: Apache-2.0
//
// Frozen foundation segmenter (image encoder, prompt encoder, mask decoder) and
// the frozen hierarchical semantic encoder that feeds the fusion module.
//
// The stub backend is a randomly initialised miniature with the same contracts
// as the full-size models; the pretrained backend uses the same graph at
// ViT-B / Swin-B widths with weights read from an archive.
#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sammese/autograd.hpp"
#include "sammese/config.hpp"
#include "sammese/nn.hpp"
#include "sammese/registry.hpp"

namespace sammese {

/// Residual delta added beside a frozen sublayer. Receives the sublayer input
/// tokens [b, d, c] and returns a tensor of the same shape.
using AdapterFn = std::function<ag::Var(const ag::Var& tokens)>;

struct BlockAdapters {
  AdapterFn attention;
  AdapterFn mlp;
};

struct Point {
  double x = 0, y = 0;
  int label = 1;  // 1 = foreground
};

struct Box {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
};

/// Automatically derived prompts for one image. Coordinates are pixels of the
/// encoder input.
struct GeometricPrompts {
  Tensor mask;  // [mask_size, mask_size], raw probabilities; empty when absent
  std::vector<Box> boxes;
  std::vector<Point> points;
};

struct PromptEmbeddings {
  ag::Var sparse;  // [b, k, c_img]
  ag::Var dense;   // [b, c_img, h_e, w_e]
};

/// Four levels, finest first; level i+1 has half the spatial size of level i.
using PyramidFeatures = std::array<ag::Var, 4>;

/// Fixed 2-D sinusoidal encoding of normalised coordinates (u, v) in [0, 1].
std::vector<double> sinusoidal_encoding(double u, double v, int64_t channels);
/// [1, g*g, channels] encoding of a g x g grid of cell centres.
Tensor grid_encoding(int64_t grid, int64_t channels);

class ImageEncoder {
 public:
  ImageEncoder(const RunConfig& cfg, ParameterRegistry& reg, uint64_t seed);

  /// img: [b, 3, S, S]. With adapters, one pair per block is required.
  ag::Var encode(const ag::Var& img, const std::vector<BlockAdapters>* adapters = nullptr) const;

  int64_t depth() const { return static_cast<int64_t>(blocks_.size()); }
  int64_t width() const { return width_; }
  int64_t grid() const { return grid_; }
  int64_t input_size() const { return input_size_; }
  int64_t embed_dim() const { return embed_dim_; }

 private:
  struct Block {
    nn::LayerNorm ln1, ln2;
    nn::Attention attn;
    nn::Mlp mlp;
  };
  nn::Conv2d patch_embed_;
  std::vector<Block> blocks_;
  nn::Linear neck_;
  nn::LayerNorm neck_norm_;
  Tensor pos_;
  int64_t width_, grid_, input_size_, embed_dim_, patch_;
};

class PromptEncoder {
 public:
  PromptEncoder(const RunConfig& cfg, ParameterRegistry& reg, uint64_t seed);

  /// Sparse token order: points, then two corner tokens per box. A missing
  /// mask yields the learned no-mask embedding over the grid.
  PromptEmbeddings encode(const GeometricPrompts& geo) const;
  /// Dense prompt without any mask input.
  ag::Var no_mask_dense(int64_t batch) const;
  /// [1, c, g, g] positional encoding of the image-embedding grid.
  const Tensor& dense_pe() const { return dense_pe_; }

  int64_t mask_size() const { return 4 * grid_; }
  int64_t embed_dim() const { return embed_dim_; }

 private:
  ag::Var point_embed_;  // [4, c]: background, foreground, box corner 1, box corner 2
  ag::Var no_mask_;      // [c]
  nn::Conv2d mask_down1_, mask_down2_, mask_proj_;
  Tensor dense_pe_;
  int64_t embed_dim_, grid_, input_size_;
};

class MaskDecoder {
 public:
  MaskDecoder(const RunConfig& cfg, ParameterRegistry& reg, uint64_t seed);

  /// Returns the saliency map [b, 1, S, S] in [0, 1] (sigmoid of upsampled logits).
  ag::Var decode(const ag::Var& image_embedding, const ag::Var& sparse, const ag::Var& dense,
                 const Tensor& dense_pe) const;

 private:
  struct Round {
    nn::Attention self_attn, token_to_image, image_to_token;
    nn::LayerNorm norm1, norm2, norm3, norm4;
    nn::Mlp mlp;
  };
  ag::Var output_token_;  // [1, c]
  std::vector<Round> rounds_;
  nn::ConvTranspose2d up1_, up2_;
  nn::Mlp hyper_;
  int64_t embed_dim_, input_size_;
};

/// The foundation segmenter: every parameter is frozen.
class Foundation {
 public:
  Foundation(const RunConfig& cfg, ParameterRegistry& reg, uint64_t seed);

  ag::Var encode_image(const ag::Var& img, const std::vector<BlockAdapters>* adapters) const {
    return image_encoder.encode(img, adapters);
  }
  PromptEmbeddings encode_prompts(const GeometricPrompts& geo) const {
    return prompt_encoder.encode(geo);
  }
  ag::Var decode_mask(const ag::Var& emb, const ag::Var& sparse, const ag::Var& dense) const {
    return mask_decoder.decode(emb, sparse, dense, prompt_encoder.dense_pe());
  }

  ImageEncoder image_encoder;
  PromptEncoder prompt_encoder;
  MaskDecoder mask_decoder;
};

/// Frozen four-stage strided hierarchy standing in for the semantic encoder.
class SemanticEncoder {
 public:
  SemanticEncoder(const RunConfig& cfg, ParameterRegistry& reg, uint64_t seed);

  /// img: [b, 3, sem_size, sem_size].
  PyramidFeatures encode(const ag::Var& img) const;
  int64_t width(int64_t level) const { return widths_[static_cast<size_t>(level - 1)]; }
  int64_t input_size() const { return input_size_; }

 private:
  struct Stage {
    nn::Conv2d down;
    nn::Conv2d refine;
  };
  std::array<Stage, 4> stages_;
  std::array<int64_t, 4> widths_;
  int64_t input_size_;
};

/// Overwrites frozen parameters with arrays from a checkpoint archive. Archive
/// names are translated through a prefix alias table first. Every frozen
/// parameter must be present with a matching shape.
void load_pretrained_weights(ParameterRegistry& reg, const std::string& path);

}  // namespace sammese
