// SPDX-License-Identifier: Apache-2.0
//
// The assembled network: frozen foundation and semantic encoders plus the
// trainable fusion module, coarse head, adapters and prompt generator.
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "sammese/config.hpp"
#include "sammese/data_io.hpp"
#include "sammese/foundation.hpp"
#include "sammese/madapter.hpp"
#include "sammese/mcfm.hpp"
#include "sammese/prompt_gen.hpp"
#include "sammese/registry.hpp"

namespace sammese {

struct ForwardResult {
  ag::Var saliency;  // [1, 1, S, S]
  ag::Var coarse;    // [1, 1, S, S]
  ag::Var f_sem;
  GeometricPrompts geo;
  int64_t sparse_tokens = 0;
};

class SammeseModel {
 public:
  /// Builds every module from `cfg`; the pretrained backend also loads the
  /// frozen weights named in the config.
  explicit SammeseModel(const RunConfig& cfg);

  SammeseModel(const SammeseModel&) = delete;
  SammeseModel& operator=(const SammeseModel&) = delete;

  ForwardResult forward(const PreprocessedSample& s) const;

  /// Frozen semantic features of the selected level for (rgb, aux). Results
  /// are cached by sample id when `cache` is set.
  std::pair<ag::Var, ag::Var> semantic_features(const PreprocessedSample& s, bool cache) const;

  const RunConfig& config() const { return cfg_; }
  ParameterRegistry& registry() { return *registry_; }
  const ParameterRegistry& registry() const { return *registry_; }

  /// Learnable count derived from the module structure rather than the registry.
  int64_t analytic_trainable_count() const;

  void clear_cache() const { cache_.clear(); }
  void set_caching(bool on) { caching_ = on; }

 private:
  RunConfig cfg_;
  std::unique_ptr<ParameterRegistry> registry_;

 public:
  Foundation foundation;
  SemanticEncoder semantic;
  Mcfm mcfm;
  CoarseHead coarse_head;
  MAdapterSet adapters;
  std::optional<PromptGenerator> prompt_gen;

 private:
  bool caching_ = true;
  mutable std::map<std::string, std::pair<Tensor, Tensor>> cache_;
};

/// Convenience: wraps a [c, h, w] tensor as a constant [1, c, h, w] variable.
ag::Var batch_of_one(const Tensor& t);

}  // namespace sammese
