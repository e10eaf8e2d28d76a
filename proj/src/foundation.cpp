// SPDX-License-Identifier: Apache-2.0
#include "sammese/foundation.hpp"

#include <cmath>
#include <map>

#include "sammese/checkpoint.hpp"

namespace sammese {

std::vector<double> sinusoidal_encoding(double u, double v, int64_t channels) {
  // Half the channels encode u, half encode v; each half is sin/cos pairs at
  // frequencies pi, 2pi, ... .
  std::vector<double> out(static_cast<size_t>(channels), 0.0);
  const int64_t freqs = channels / 4;
  for (int64_t k = 0; k < freqs; ++k) {
    const double f = M_PI * static_cast<double>(k + 1);
    out[static_cast<size_t>(2 * k)] = std::sin(f * u);
    out[static_cast<size_t>(2 * k + 1)] = std::cos(f * u);
    out[static_cast<size_t>(2 * freqs + 2 * k)] = std::sin(f * v);
    out[static_cast<size_t>(2 * freqs + 2 * k + 1)] = std::cos(f * v);
  }
  return out;
}

Tensor grid_encoding(int64_t grid, int64_t channels) {
  Tensor t({1, grid * grid, channels});
  for (int64_t y = 0; y < grid; ++y)
    for (int64_t x = 0; x < grid; ++x) {
      const auto e = sinusoidal_encoding((x + 0.5) / grid, (y + 0.5) / grid, channels);
      for (int64_t c = 0; c < channels; ++c) t.at(0, y * grid + x, c) = e[static_cast<size_t>(c)];
    }
  return t;
}

namespace {

Tensor tile_batch(const Tensor& t, int64_t batch) {
  Shape s = t.shape();
  s[0] = batch;
  Tensor out(s);
  for (int64_t b = 0; b < batch; ++b)
    std::copy(t.values().begin(), t.values().end(), out.data() + b * t.numel());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Image encoder

ImageEncoder::ImageEncoder(const RunConfig& cfg, ParameterRegistry& reg, uint64_t seed)
    : width_(cfg.encoder_width),
      grid_(cfg.encoder_grid()),
      input_size_(cfg.sam_size),
      embed_dim_(cfg.embed_dim),
      patch_(cfg.patch_size) {
  const nn::Builder b{reg, seed, false};
  const std::string p = "foundation.image_encoder.";
  patch_embed_ = nn::Conv2d::make(b, p + "patch_embed", 3, width_, patch_, patch_, 0);
  for (int64_t i = 0; i < cfg.encoder_depth; ++i) {
    const std::string bp = p + "block" + std::to_string(i) + ".";
    blocks_.push_back({nn::LayerNorm::make(b, bp + "ln1", width_),
                       nn::LayerNorm::make(b, bp + "ln2", width_),
                       nn::Attention::make(b, bp + "attn", width_, width_, width_,
                                           cfg.encoder_heads, true),
                       nn::Mlp::make(b, bp + "mlp", width_, 4 * width_, width_)});
  }
  neck_ = nn::Linear::make(b, p + "neck", width_, embed_dim_);
  neck_norm_ = nn::LayerNorm::make(b, p + "neck_norm", embed_dim_);
  pos_ = grid_encoding(grid_, width_);
}

ag::Var ImageEncoder::encode(const ag::Var& img,
                             const std::vector<BlockAdapters>* adapters) const {
  if (img.value().rank() != 4 || img.dim(1) != 3 || img.dim(2) != input_size_ ||
      img.dim(3) != input_size_) {
    throw ShapeError("encode_image: expected [b, 3, " + std::to_string(input_size_) + ", " +
                     std::to_string(input_size_) + "], got " + shape_str(img.shape()));
  }
  if (adapters && static_cast<int64_t>(adapters->size()) != depth()) {
    throw std::invalid_argument("encode_image: " + std::to_string(adapters->size()) +
                                " adapter pairs for " + std::to_string(depth()) + " blocks");
  }
  const int64_t batch = img.dim(0);
  ag::Var x = ag::grid_to_tokens(patch_embed_(img));
  x = ag::add(x, ag::Var::constant(tile_batch(pos_, batch)));
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const Block& blk = blocks_[i];
    const ag::Var h = blk.ln1(x);
    ag::Var x1 = ag::add(x, blk.attn(h, h));
    if (adapters) x1 = ag::add(x1, (*adapters)[i].attention(x));
    ag::Var x2 = ag::add(x1, blk.mlp(blk.ln2(x1)));
    if (adapters) x2 = ag::add(x2, (*adapters)[i].mlp(x1));
    x = x2;
  }
  return ag::tokens_to_grid(neck_norm_(neck_(x)), grid_, grid_);
}

// ---------------------------------------------------------------------------
// Prompt encoder

PromptEncoder::PromptEncoder(const RunConfig& cfg, ParameterRegistry& reg, uint64_t seed)
    : embed_dim_(cfg.embed_dim), grid_(cfg.encoder_grid()), input_size_(cfg.sam_size) {
  const nn::Builder b{reg, seed, false};
  const std::string p = "foundation.prompt_encoder.";
  point_embed_ = b.param(p + "point_embed", {4, embed_dim_}, Init::normal(1.0));
  no_mask_ = b.param(p + "no_mask", {embed_dim_}, Init::normal(1.0));
  mask_down1_ = nn::Conv2d::make(b, p + "mask_down1", 1, 4, 2, 2, 0);
  mask_down2_ = nn::Conv2d::make(b, p + "mask_down2", 4, 16, 2, 2, 0);
  mask_proj_ = nn::Conv2d::make(b, p + "mask_proj", 16, embed_dim_, 1, 1, 0);
  dense_pe_ = ag::tokens_to_grid(ag::Var::constant(grid_encoding(grid_, embed_dim_)), grid_, grid_)
                  .value();
}

PromptEmbeddings PromptEncoder::encode(const GeometricPrompts& geo) const {
  const double s = static_cast<double>(input_size_);
  auto check = [&](double x, double y, const char* what) {
    if (!(x >= 0 && y >= 0 && x <= s - 1 && y <= s - 1)) {
      throw std::out_of_range(std::string("encode_prompts: ") + what + " (" + std::to_string(x) +
                              ", " + std::to_string(y) + ") outside a " +
                              std::to_string(input_size_) + "px image");
    }
  };
  const int64_t k = static_cast<int64_t>(geo.points.size() + 2 * geo.boxes.size());
  Tensor sparse({1, k, embed_dim_});
  const Tensor& pe_table = point_embed_.value();
  int64_t t = 0;
  auto emit = [&](double x, double y, int64_t row) {
    const auto e = sinusoidal_encoding((x + 0.5) / s, (y + 0.5) / s, embed_dim_);
    for (int64_t c = 0; c < embed_dim_; ++c)
      sparse.at(0, t, c) = e[static_cast<size_t>(c)] + pe_table.at(row, c);
    ++t;
  };
  for (const Point& pt : geo.points) {
    check(pt.x, pt.y, "point");
    if (pt.label != 0 && pt.label != 1) throw std::invalid_argument("point label must be 0 or 1");
    emit(pt.x, pt.y, pt.label);
  }
  for (const Box& bx : geo.boxes) {
    check(bx.x_min, bx.y_min, "box corner");
    check(bx.x_max, bx.y_max, "box corner");
    emit(bx.x_min, bx.y_min, 2);
    emit(bx.x_max, bx.y_max, 3);
  }

  PromptEmbeddings out;
  out.sparse = ag::Var::constant(std::move(sparse));
  if (geo.mask.empty()) {
    out.dense = no_mask_dense(1);
  } else {
    const int64_t ms = mask_size();
    if (geo.mask.shape() != Shape{ms, ms}) {
      throw ShapeError("encode_prompts: mask prompt must be [" + std::to_string(ms) + ", " +
                       std::to_string(ms) + "], got " + shape_str(geo.mask.shape()));
    }
    ag::Var m = ag::Var::constant(geo.mask.reshaped({1, 1, ms, ms}));
    m = ag::gelu(mask_down1_(m));
    m = ag::gelu(mask_down2_(m));
    out.dense = mask_proj_(m);
  }
  return out;
}

ag::Var PromptEncoder::no_mask_dense(int64_t batch) const {
  return ag::broadcast_channels(no_mask_, batch, grid_, grid_);
}

// ---------------------------------------------------------------------------
// Mask decoder

MaskDecoder::MaskDecoder(const RunConfig& cfg, ParameterRegistry& reg, uint64_t seed)
    : embed_dim_(cfg.embed_dim), input_size_(cfg.sam_size) {
  const nn::Builder b{reg, seed, false};
  const std::string p = "foundation.mask_decoder.";
  const int64_t c = embed_dim_;
  output_token_ = b.param(p + "output_token", {1, c}, Init::normal(1.0));
  for (int r = 0; r < 2; ++r) {
    const std::string rp = p + "round" + std::to_string(r) + ".";
    rounds_.push_back({nn::Attention::make(b, rp + "self_attn", c, c, c, cfg.decoder_heads, true),
                       nn::Attention::make(b, rp + "token_to_image", c, c, c, cfg.decoder_heads,
                                           true),
                       nn::Attention::make(b, rp + "image_to_token", c, c, c, cfg.decoder_heads,
                                           true),
                       nn::LayerNorm::make(b, rp + "norm1", c),
                       nn::LayerNorm::make(b, rp + "norm2", c),
                       nn::LayerNorm::make(b, rp + "norm3", c),
                       nn::LayerNorm::make(b, rp + "norm4", c),
                       nn::Mlp::make(b, rp + "mlp", c, 2 * c, c)});
  }
  up1_ = nn::ConvTranspose2d::make(b, p + "up1", c, c / 4, 2, 2);
  up2_ = nn::ConvTranspose2d::make(b, p + "up2", c / 4, c / 8, 2, 2);
  hyper_ = nn::Mlp::make(b, p + "hyper", c, c, c / 8);
}

ag::Var MaskDecoder::decode(const ag::Var& image_embedding, const ag::Var& sparse,
                            const ag::Var& dense, const Tensor& dense_pe) const {
  const int64_t c = embed_dim_;
  if (image_embedding.value().rank() != 4 || image_embedding.dim(1) != c) {
    throw ShapeError("decode_mask: image embedding " + shape_str(image_embedding.shape()) +
                     " does not have " + std::to_string(c) + " channels");
  }
  const int64_t batch = image_embedding.dim(0);
  const int64_t gh = image_embedding.dim(2), gw = image_embedding.dim(3);
  if (dense.shape() != image_embedding.shape()) {
    throw ShapeError("decode_mask: dense prompt " + shape_str(dense.shape()) +
                     " does not match image embedding " + shape_str(image_embedding.shape()));
  }
  if (sparse.value().rank() != 3 || sparse.dim(0) != batch || sparse.dim(2) != c) {
    throw ShapeError("decode_mask: sparse tokens " + shape_str(sparse.shape()) +
                     " incompatible with embedding width " + std::to_string(c));
  }

  ag::Var tokens = ag::concat1(ag::broadcast_batch(output_token_, batch), sparse);
  ag::Var src = ag::grid_to_tokens(ag::add(image_embedding, dense));
  Tensor pe_tokens = ag::grid_to_tokens(ag::Var::constant(dense_pe)).value();
  {
    Tensor tiled({batch, gh * gw, c});
    for (int64_t b = 0; b < batch; ++b)
      std::copy(pe_tokens.values().begin(), pe_tokens.values().end(),
                tiled.data() + b * pe_tokens.numel());
    pe_tokens = std::move(tiled);
  }
  const ag::Var pos = ag::Var::constant(pe_tokens);

  for (const Round& r : rounds_) {
    tokens = r.norm1(ag::add(tokens, r.self_attn(tokens, tokens)));
    const ag::Var keyed = ag::add(src, pos);
    tokens = r.norm2(ag::add(tokens, r.token_to_image(tokens, keyed, src)));
    tokens = r.norm3(ag::add(tokens, r.mlp(tokens)));
    src = r.norm4(ag::add(src, r.image_to_token(ag::add(src, pos), tokens, tokens)));
  }

  ag::Var up = ag::gelu(up1_(ag::tokens_to_grid(src, gh, gw)));
  up = ag::gelu(up2_(up));
  const int64_t uh = up.dim(2), uw = up.dim(3), uc = up.dim(1);
  const ag::Var hyper = hyper_(ag::slice1(tokens, 0, 1));  // [b, 1, c/8]
  ag::Var logits = ag::bmm(hyper, ag::reshape(up, {batch, uc, uh * uw}), false);
  logits = ag::reshape(logits, {batch, 1, uh, uw});
  logits = ag::resize_bilinear(logits, input_size_, input_size_);
  return ag::sigmoid(logits);
}

Foundation::Foundation(const RunConfig& cfg, ParameterRegistry& reg, uint64_t seed)
    : image_encoder(cfg, reg, seed), prompt_encoder(cfg, reg, seed), mask_decoder(cfg, reg, seed) {}

// ---------------------------------------------------------------------------
// Semantic encoder

SemanticEncoder::SemanticEncoder(const RunConfig& cfg, ParameterRegistry& reg, uint64_t seed)
    : widths_(cfg.sem_widths), input_size_(cfg.sem_size) {
  const nn::Builder b{reg, seed, false};
  const std::string p = "semantic_encoder.stage";
  int64_t in = 3;
  for (size_t i = 0; i < 4; ++i) {
    const std::string sp = p + std::to_string(i + 1) + ".";
    const int64_t k = i == 0 ? cfg.sem_stem_stride : 2;
    stages_[i] = {nn::Conv2d::make(b, sp + "down", in, widths_[i], k, k, 0),
                  nn::Conv2d::make(b, sp + "refine", widths_[i], widths_[i], 3, 1, 1)};
    in = widths_[i];
  }
}

PyramidFeatures SemanticEncoder::encode(const ag::Var& img) const {
  if (img.value().rank() != 4 || img.dim(1) != 3 || img.dim(2) != input_size_ ||
      img.dim(3) != input_size_) {
    throw ShapeError("encode_semantic_pyramid: expected [b, 3, " + std::to_string(input_size_) +
                     ", " + std::to_string(input_size_) + "], got " + shape_str(img.shape()));
  }
  PyramidFeatures out;
  ag::Var x = img;
  for (size_t i = 0; i < 4; ++i) {
    x = ag::gelu(stages_[i].down(x));
    x = ag::add(x, ag::gelu(stages_[i].refine(x)));
    out[i] = x;
  }
  return out;
}

// ---------------------------------------------------------------------------

void load_pretrained_weights(ParameterRegistry& reg, const std::string& path) {
  // Prefix aliases for archives exported with the upstream module names.
  static const std::vector<std::pair<std::string, std::string>> kAliases = {
      {"image_encoder.", "foundation.image_encoder."},
      {"prompt_encoder.", "foundation.prompt_encoder."},
      {"mask_decoder.", "foundation.mask_decoder."},
      {"backbone.", "semantic_encoder."},
  };
  const Archive archive = read_archive(path);
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, array] : archive.arrays) {
    std::string mapped = name;
    for (const auto& [from, to] : kAliases) {
      if (mapped.rfind(from, 0) == 0) {
        mapped = to + mapped.substr(from.size());
        break;
      }
    }
    by_name[mapped] = &array;
  }
  for (const auto* e : reg.frozen()) {
    auto it = by_name.find(e->name);
    if (it == by_name.end()) {
      throw std::runtime_error("pretrained weights " + path + " lack parameter " + e->name);
    }
    if (it->second->shape() != e->var.shape()) {
      throw ShapeError("pretrained parameter " + e->name + " has shape " +
                       shape_str(it->second->shape()) + ", expected " +
                       shape_str(e->var.shape()));
    }
    ag::Var v = e->var;
    v.mutable_value() = *it->second;
  }
}

}  // namespace sammese
