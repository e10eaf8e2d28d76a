// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "sammese/checkpoint.hpp"
#include "sammese/model.hpp"
#include "test_support.hpp"

namespace sammese {
namespace {

using testing::TempDir;

PreprocessedSample sample(const RunConfig& cfg, uint64_t seed = 0) {
  return preprocess(make_synthetic_dataset(1, 48, seed)[0], cfg);
}

// Config -------------------------------------------------------------------

TEST(Config, TextRoundTripAndFileLayering) {
  RunConfig a = RunConfig::toy();
  a.set("adapter_variant", "no_fusion");
  a.set("sem_widths", "4, 8, 16, 16");
  a.set("lr", "2.5e-4");
  RunConfig b;
  b.load_text(a.to_text());
  EXPECT_EQ(b.to_text(), a.to_text());
  EXPECT_EQ(b.adapter_variant, AdapterVariant::no_fusion);
  EXPECT_EQ(b.sem_widths[2], 16);

  TempDir dir("cfg");
  std::ofstream(dir / "x.cfg") << "# comment\nqueries = 7   # trailing\n\nmodality=depth\n";
  RunConfig c = RunConfig::toy();
  c.load_file(dir / "x.cfg");
  EXPECT_EQ(c.queries, 7);
  EXPECT_EQ(c.modality, Modality::depth);
  EXPECT_EQ(c.sam_size, 64);  // untouched keys keep their values
}

TEST(Config, BadSettingsAreRejected) {
  RunConfig c;
  EXPECT_THROW(c.set("no_such_key", "1"), ConfigError);
  EXPECT_THROW(c.set("queries", "many"), ConfigError);
  EXPECT_THROW(c.set("mcfm_variant", "fancy"), ConfigError);
  EXPECT_THROW(c.set("geometric_prompts", "maybe"), ConfigError);
  EXPECT_THROW(c.load_text("queries 4\n"), ConfigError);
  RunConfig v = RunConfig::toy();
  v.queries = 0;
  EXPECT_THROW(v.validate(), ConfigError);
  v = RunConfig::toy();
  v.sam_size = 60;
  EXPECT_THROW(v.validate(), ConfigError);
  v = RunConfig::toy();
  v.bottleneck = 64;
  EXPECT_THROW(v.validate(), ConfigError);
  EXPECT_NO_THROW(RunConfig{}.validate());
  EXPECT_NO_THROW(RunConfig::toy().validate());
  EXPECT_NO_THROW(RunConfig::pretrained_dims().validate());
}

TEST(Config, ArchitectureHashTracksShapeSettingsOnly) {
  RunConfig a = RunConfig::toy(), b = RunConfig::toy();
  b.lr = 0.5;
  b.seed = 9;
  b.epochs = 3;
  EXPECT_EQ(a.architecture_hash(), b.architecture_hash());
  b.queries = 31;
  EXPECT_NE(a.architecture_hash(), b.architecture_hash());
}

TEST(Config, DefaultsMatchTheFullSizeSetup) {
  const RunConfig c;
  EXPECT_EQ(c.sam_size, 1024);
  EXPECT_EQ(c.sem_size, 384);
  EXPECT_EQ(c.queries, 30);
  EXPECT_EQ(c.batch, 2);
  EXPECT_DOUBLE_EQ(c.lr, 1e-5);
  EXPECT_EQ(c.encoder_grid(), 64);
  EXPECT_EQ(c.pyramid_size(4), 12);
}

// Registry -------------------------------------------------------------------

TEST(Registry, MembershipAndInitStreams) {
  ParameterRegistry reg;
  reg.add("mcfm.a", Tensor({2, 3}), true);
  reg.add("semantic_encoder.b", Tensor({4}), false);
  EXPECT_THROW(reg.add("mcfm.a", Tensor({1}), true), std::invalid_argument);
  EXPECT_THROW(reg.add("semantic_encoder.c", Tensor({1}), true), std::invalid_argument);
  EXPECT_EQ(reg.trainable_count(), 6);
  EXPECT_EQ(reg.frozen_count(), 4);
  EXPECT_EQ(ParameterRegistry::module_of("madapter.block0.attn.up.weight"), "madapter");

  const Init init = Init::fan_in(12);
  const Tensor x = init.make({3, 4}, 5, "p"), y = init.make({3, 4}, 5, "p"), z = init.make({3, 4}, 5, "q");
  EXPECT_TRUE(x.identical(y));
  EXPECT_FALSE(x.identical(z));
  for (double v : x.values()) EXPECT_LE(std::abs(v), std::sqrt(3.0 / 12.0));
}

// Model ------------------------------------------------------------------------

TEST(Model, ParameterPartitionAndAnalyticCount) {
  for (const char* ablate : {"", "no-mcfm", "cd", "no-fusion", "adapter-fx", "adapter-fsem",
                             "no-madapter", "no-semantic"}) {
    RunConfig cfg = testing::tiny_config();
    if (*ablate) {
      const std::string a = ablate;
      if (a == "no-mcfm") cfg.mcfm_variant = McfmVariant::no_mcfm;
      if (a == "cd") cfg.mcfm_variant = McfmVariant::complex_design;
      if (a == "no-fusion") cfg.adapter_variant = AdapterVariant::no_fusion;
      if (a == "adapter-fx") cfg.adapter_variant = AdapterVariant::adapter_fx;
      if (a == "adapter-fsem") cfg.adapter_variant = AdapterVariant::adapter_fsem;
      if (a == "no-madapter") cfg.adapter_variant = AdapterVariant::none;
      if (a == "no-semantic") cfg.semantic_prompts = false;
    }
    const SammeseModel m(cfg);
    EXPECT_EQ(m.registry().trainable_count(), m.analytic_trainable_count()) << ablate;
    for (const auto& e : m.registry().entries()) {
      const bool frozen_module = e.module == "foundation" || e.module == "semantic_encoder";
      EXPECT_EQ(e.trainable, !frozen_module) << e.name;
    }
  }
}

TEST(Model, ZeroInitAdaptersGiveThePristineEncoderOutput) {
  const RunConfig cfg = RunConfig::toy();
  const SammeseModel m(cfg);
  const PreprocessedSample s = sample(cfg);
  const auto [f_rgb, f_aux] = m.semantic_features(s, false);
  const ag::Var f_sem = m.mcfm.forward(f_rgb, f_aux);
  const auto hooks = m.adapters.bind(f_sem, cfg.encoder_grid());
  const ag::Var img = batch_of_one(s.rgb_large);
  EXPECT_TRUE(m.foundation.encode_image(img, &hooks).value().identical(
      m.foundation.encode_image(img, nullptr).value()));
}

TEST(Model, ForwardOutputsAndTokenCount) {
  const RunConfig cfg = RunConfig::toy();
  const SammeseModel m(cfg);
  const ForwardResult r = m.forward(sample(cfg));
  EXPECT_EQ(r.saliency.shape(), (Shape{1, 1, 64, 64}));
  EXPECT_EQ(r.coarse.shape(), (Shape{1, 1, 64, 64}));
  EXPECT_EQ(r.sparse_tokens,
            static_cast<int64_t>(r.geo.points.size() + 2 * r.geo.boxes.size()) + 30);
  EXPECT_EQ(r.geo.mask.shape(), (Shape{32, 32}));
  EXPECT_THROW(m.forward(sample(testing::tiny_config())), ShapeError);
}

TEST(Model, SemanticCacheDoesNotChangeResults) {
  RunConfig cfg = testing::tiny_config();
  SammeseModel m(cfg);
  const PreprocessedSample s = sample(cfg);
  const Tensor a = m.forward(s).saliency.value();
  const Tensor b = m.forward(s).saliency.value();  // cached features
  m.set_caching(false);
  const Tensor c = m.forward(s).saliency.value();
  EXPECT_TRUE(a.identical(b));
  EXPECT_TRUE(a.identical(c));
}

TEST(Model, SeedsChangeInitialisation) {
  RunConfig a = testing::tiny_config(), b = testing::tiny_config();
  b.seed = 1;
  const SammeseModel ma(a), mb(b);
  EXPECT_FALSE(ma.registry().get("mcfm.conv_initial.weight").value().identical(
      mb.registry().get("mcfm.conv_initial.weight").value()));
}

// Checkpoint -----------------------------------------------------------------

TEST(Checkpoint, RoundTripRestoresEveryParameter) {
  TempDir dir("ckpt");
  RunConfig cfg = testing::tiny_config();
  SammeseModel a(cfg);
  for (const auto* e : a.registry().trainable()) e->var.node()->value.fill(0.125);
  save_checkpoint(dir / "a.ckpt", a.registry(), cfg);
  SammeseModel b(cfg);
  load_checkpoint(dir / "a.ckpt", b.registry(), cfg);
  for (const auto& e : a.registry().entries()) {
    EXPECT_TRUE(e.var.value().identical(b.registry().get(e.name).value())) << e.name;
  }
  // identical parameters give identical bytes
  save_checkpoint(dir / "b.ckpt", b.registry(), cfg);
  std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
  const Archive arc = read_archive(dir / "a.ckpt");
  EXPECT_EQ(arc.manifest.at("config_hash").get<uint64_t>(), cfg.architecture_hash());
}

TEST(Checkpoint, MismatchesAreRejected) {
  TempDir dir("ckpt_bad");
  RunConfig cfg = testing::tiny_config();
  SammeseModel a(cfg);
  save_checkpoint(dir / "a.ckpt", a.registry(), cfg);

  RunConfig other = cfg;
  other.queries = 5;
  SammeseModel b(other);
  EXPECT_THROW(load_checkpoint(dir / "a.ckpt", b.registry(), other), CheckpointError);

  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt", a.registry(), cfg), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt", a.registry(), cfg), CheckpointError);

  // truncated payload
  std::ifstream in(dir / "a.ckpt", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  std::ofstream(dir / "cut.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 16);
  EXPECT_THROW(load_checkpoint(dir / "cut.ckpt", a.registry(), cfg), CheckpointError);
}

TEST(Checkpoint, PretrainedBackendLoadsFrozenWeightsFromAnArchive) {
  TempDir dir("pre");
  RunConfig cfg = testing::tiny_config();
  SammeseModel donor(cfg);
  for (const auto* e : donor.registry().frozen()) e->var.node()->value.fill(0.01);
  save_checkpoint(dir / "w.ckpt", donor.registry(), cfg);
  RunConfig pcfg = cfg;
  pcfg.backend = Backend::pretrained;
  pcfg.pretrained_weights = dir / "w.ckpt";
  SammeseModel m(pcfg);
  for (const auto* e : m.registry().frozen()) {
    for (double v : e->var.value().values()) ASSERT_EQ(v, 0.01) << e->name;
  }
  pcfg.pretrained_weights.clear();
  EXPECT_THROW(SammeseModel{pcfg}, ConfigError);
}

}  // namespace
}  // namespace sammese
