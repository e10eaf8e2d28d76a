// SPDX-License-Identifier: Apache-2.0
#include "sammese/model.hpp"

namespace sammese {

namespace {

const RunConfig& validated(const RunConfig& cfg) {
  cfg.validate();
  return cfg;
}

int64_t c_sem_of(const RunConfig& cfg) {
  return cfg.sem_widths[static_cast<size_t>(cfg.feature_level - 1)];
}

}  // namespace

ag::Var batch_of_one(const Tensor& t) {
  Shape s = t.shape();
  s.insert(s.begin(), 1);
  return ag::Var::constant(t.reshaped(s));
}

SammeseModel::SammeseModel(const RunConfig& cfg)
    : cfg_(validated(cfg)),
      registry_(std::make_unique<ParameterRegistry>()),
      foundation(cfg_, *registry_, cfg_.seed),
      semantic(cfg_, *registry_, cfg_.seed),
      mcfm(nn::Builder{*registry_, cfg_.seed, true}, c_sem_of(cfg_), cfg_.mcfm_heads,
           cfg_.mcfm_variant),
      coarse_head(nn::Builder{*registry_, cfg_.seed, true}, c_sem_of(cfg_)),
      adapters(nn::Builder{*registry_, cfg_.seed, true}, cfg_.encoder_depth, cfg_.encoder_width,
               cfg_.effective_bottleneck(), c_sem_of(cfg_), cfg_.adapter_variant) {
  if (cfg_.semantic_prompts) {
    prompt_gen.emplace(nn::Builder{*registry_, cfg_.seed, true}, c_sem_of(cfg_), cfg_.queries,
                       cfg_.query_dim, cfg_.embed_dim);
  }
  if (cfg_.backend == Backend::pretrained) {
    if (cfg_.pretrained_weights.empty()) {
      throw ConfigError("backend = pretrained requires pretrained_weights");
    }
    load_pretrained_weights(*registry_, cfg_.pretrained_weights);
  }
}

std::pair<ag::Var, ag::Var> SammeseModel::semantic_features(const PreprocessedSample& s,
                                                            bool cache) const {
  const bool use_cache = cache && caching_ && !s.id.empty();
  if (use_cache) {
    const auto it = cache_.find(s.id);
    if (it != cache_.end()) {
      return {ag::Var::constant(it->second.first), ag::Var::constant(it->second.second)};
    }
  }
  const auto level = static_cast<size_t>(cfg_.feature_level - 1);
  const ag::Var f_rgb = semantic.encode(batch_of_one(s.rgb_small))[level];
  const ag::Var f_aux = semantic.encode(batch_of_one(s.aux_small))[level];
  if (use_cache) cache_[s.id] = {f_rgb.value(), f_aux.value()};
  return {f_rgb, f_aux};
}

ForwardResult SammeseModel::forward(const PreprocessedSample& s) const {
  const int64_t size = cfg_.sam_size;
  if (s.rgb_large.shape() != Shape{3, size, size}) {
    throw ShapeError("forward: rgb_large must be [3, " + std::to_string(size) + ", " +
                     std::to_string(size) + "], got " + shape_str(s.rgb_large.shape()));
  }
  ForwardResult r;
  const auto [f_rgb, f_aux] = semantic_features(s, true);
  r.f_sem = mcfm.forward(f_rgb, f_aux);
  r.coarse = coarse_head.forward(r.f_sem, size);

  std::vector<BlockAdapters> hooks;
  if (adapters.enabled()) hooks = adapters.bind(r.f_sem, cfg_.encoder_grid());
  const ag::Var emb =
      foundation.encode_image(batch_of_one(s.rgb_large), adapters.enabled() ? &hooks : nullptr);

  if (cfg_.geometric_prompts) {
    GeometricOptions opt;
    opt.threshold = cfg_.prompt_threshold;
    opt.min_area_frac = cfg_.min_area_frac;
    opt.max_points = cfg_.max_points;
    opt.per_component_boxes = cfg_.per_component_boxes;
    opt.mask_size = cfg_.mask_prompt_size();
    r.geo = derive_geometric(r.coarse.value().reshaped({size, size}), opt);
  }
  ag::Var p_sem;
  if (prompt_gen) p_sem = prompt_gen->forward(r.f_sem);
  const PromptEmbeddings prompts =
      assemble_decoder_inputs(p_sem, r.geo, foundation.prompt_encoder, cfg_.geometric_prompts);
  r.sparse_tokens = prompts.sparse.dim(1);
  r.saliency = foundation.decode_mask(emb, prompts.sparse, prompts.dense);
  return r;
}

int64_t SammeseModel::analytic_trainable_count() const {
  const int64_t c = c_sem_of(cfg_);
  const int64_t conv3 = 2 * c * c * 9 + c;
  const int64_t attn = 3 * (c * c + c);
  int64_t n = conv3;  // conv_initial
  if (cfg_.mcfm_variant != McfmVariant::no_mcfm) n += 2 * attn + conv3;
  if (cfg_.mcfm_variant == McfmVariant::complex_design) n += 2 * attn;
  n += c + 1;  // coarse head

  const int64_t w = cfg_.encoder_width, m = cfg_.effective_bottleneck();
  int64_t per = 0;
  switch (cfg_.adapter_variant) {
    case AdapterVariant::full: per = adapter_param_formula(w, m); break;
    case AdapterVariant::no_fusion: per = 2 * (w * m + m) + m * w + w; break;
    case AdapterVariant::adapter_fx:
    case AdapterVariant::adapter_fsem: per = (w * m + m) + m * w + w; break;
    case AdapterVariant::none: break;
  }
  n += 2 * cfg_.encoder_depth * per;
  if (cfg_.adapter_variant != AdapterVariant::none &&
      cfg_.adapter_variant != AdapterVariant::adapter_fx) {
    n += c * w + w;  // shared semantic alignment
  }

  if (cfg_.semantic_prompts) {
    const int64_t q = cfg_.query_dim, e = cfg_.embed_dim;
    n += c * q + q + cfg_.queries * q + 2 * 3 * (q * q + q) + q * e + e;
  }
  return n;
}

}  // namespace sammese
