// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "sammese/prompt_gen.hpp"
#include "test_support.hpp"

namespace sammese {
namespace {

using testing::random_tensor;

Tensor& val(const ag::Var& v) { return v.node()->value; }

struct Fixture {
  ParameterRegistry reg;
  nn::Builder b{reg, 11, true};
};

Tensor rect_map(int64_t size, int64_t y0, int64_t y1, int64_t x0, int64_t x1, double v = 1.0) {
  Tensor m({size, size});
  for (int64_t y = y0; y <= y1; ++y)
    for (int64_t x = x0; x <= x1; ++x) m.at(y, x) = v;
  return m;
}

TEST(PromptGen, SemanticPromptShape) {
  Fixture f;
  const PromptGenerator g(f.b, 8, 30, 32, 64);
  const ag::Var p = g.forward(ag::Var::constant(random_tensor({1, 8, 12, 12}, 1)));
  EXPECT_EQ(p.shape(), (Shape{1, 30, 64}));
  EXPECT_EQ(g.queries(), 30);
  EXPECT_THROW(g.forward(ag::Var::constant(random_tensor({1, 6, 12, 12}, 1))), ShapeError);
  for (const auto& e : f.reg.entries()) {
    EXPECT_EQ(e.module, "prompt_gen");
    EXPECT_TRUE(e.trainable);
  }
}

TEST(PromptGen, ConstantFeatureGivesUniformCrossAttention) {
  Fixture f;
  const int64_t c_sem = 5, n = 6, cq = 4;
  const PromptGenerator g(f.b, c_sem, n, cq, 8);
  Tensor fs({1, c_sem, 7, 7});
  const Tensor token = random_tensor({c_sem}, 2);
  for (int64_t k = 0; k < c_sem; ++k)
    for (int64_t i = 0; i < 49; ++i) fs[k * 49 + i] = token[k];
  const ag::Var f_sem = ag::Var::constant(fs);

  // Identical query rows give identical prompt rows.
  Tensor& q = val(g.queries_);
  for (int64_t i = 1; i < n; ++i)
    for (int64_t c = 0; c < cq; ++c) q.at(i, c) = q.at(0, c);
  const Tensor p = g.forward(f_sem).value();
  for (int64_t i = 1; i < n; ++i)
    for (int64_t c = 0; c < 8; ++c) ASSERT_NEAR(p.at(0, i, c), p.at(0, 0, c), 1e-13);

  // Closed form: every query receives v(proj(token)); with zero self-attention
  // values the prompt is out(Q + v(proj(token))).
  q = random_tensor({n, cq}, 3);
  val(g.self.v.weight).fill(0.0);
  val(g.self.v.bias).fill(0.0);
  val(g.sem_proj.bias) = random_tensor({cq}, 4);
  val(g.cross.v.bias) = random_tensor({cq}, 5);
  val(g.out.bias) = random_tensor({8}, 6);
  const Tensor& wp = g.sem_proj.weight.value();  // [cq, c_sem, 1, 1]
  std::vector<double> u(cq), v(cq);
  for (int64_t o = 0; o < cq; ++o) {
    u[o] = g.sem_proj.bias.value()[o];
    for (int64_t k = 0; k < c_sem; ++k) u[o] += wp[o * c_sem + k] * token[k];
  }
  for (int64_t o = 0; o < cq; ++o) {
    v[o] = g.cross.v.bias.value()[o];
    for (int64_t k = 0; k < cq; ++k) v[o] += u[k] * g.cross.v.weight.value().at(k, o);
  }
  const Tensor p2 = g.forward(f_sem).value();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t o = 0; o < 8; ++o) {
      double e = g.out.bias.value()[o];
      for (int64_t k = 0; k < cq; ++k) e += (q.at(i, k) + v[k]) * g.out.weight.value().at(k, o);
      ASSERT_NEAR(p2.at(0, i, o), e, 1e-12);
    }
}

TEST(PromptGen, SemanticPathGradient) {
  Fixture f;
  const PromptGenerator g(f.b, 3, 4, 4, 6, 2);
  auto f_sem = ag::Var::leaf(random_tensor({1, 3, 5, 5}, 4), true);
  const Tensor probe = random_tensor({1, 4, 6}, 5);
  std::vector<std::pair<std::string, ag::Var>> leaves = {{"f_sem", f_sem}};
  for (const auto& e : f.reg.entries()) leaves.emplace_back(e.name, e.var);
  const auto r = testing::grad_check([&] { return ag::weighted_sum(g.forward(f_sem), probe); }, leaves);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(PromptGen, RectangleGivesBoxAndCentrePoint) {
  GeometricOptions opt;
  const GeometricPrompts g = derive_geometric(rect_map(16, 2, 5, 3, 9), opt);
  ASSERT_EQ(g.boxes.size(), 1u);
  EXPECT_EQ(g.boxes[0].x_min, 3);
  EXPECT_EQ(g.boxes[0].y_min, 2);
  EXPECT_EQ(g.boxes[0].x_max, 9);
  EXPECT_EQ(g.boxes[0].y_max, 5);
  ASSERT_EQ(g.points.size(), 1u);
  EXPECT_EQ(g.points[0].x, 6);
  EXPECT_EQ(g.points[0].y, 3);
  EXPECT_EQ(g.points[0].label, 1);
  EXPECT_TRUE(g.mask.empty());
}

TEST(PromptGen, EmptyForegroundFallsBackToArgmax) {
  GeometricOptions opt;
  opt.mask_size = 16;
  Tensor m = random_tensor({12, 12}, 6, 0.0, 0.4);
  m.at(7, 2) = 0.45;
  const GeometricPrompts g = derive_geometric(m, opt);
  EXPECT_TRUE(g.boxes.empty());
  ASSERT_EQ(g.points.size(), 1u);
  EXPECT_EQ(g.points[0].x, 2);
  EXPECT_EQ(g.points[0].y, 7);
  EXPECT_EQ(g.mask.shape(), (Shape{16, 16}));
}

TEST(PromptGen, LargerBlobWinsTheSinglePoint) {
  Tensor m = rect_map(20, 1, 3, 1, 3);  // 9 px
  const Tensor big = rect_map(20, 10, 16, 8, 17);  // 70 px
  for (int64_t i = 0; i < m.numel(); ++i) m[i] = std::max(m[i], big[i]);
  GeometricOptions opt;
  opt.max_points = 1;
  const GeometricPrompts g = derive_geometric(m, opt);
  ASSERT_EQ(g.points.size(), 1u);
  EXPECT_EQ(g.points[0].x, 12);
  EXPECT_EQ(g.points[0].y, 13);
  ASSERT_EQ(g.boxes.size(), 1u);
  EXPECT_EQ(g.boxes[0].x_min, 1);
  EXPECT_EQ(g.boxes[0].y_min, 1);
  EXPECT_EQ(g.boxes[0].x_max, 17);
  EXPECT_EQ(g.boxes[0].y_max, 16);

  opt.max_points = 3;
  EXPECT_EQ(derive_geometric(m, opt).points.size(), 2u);
  opt.min_area_frac = 10.0 / 400.0;  // drops the 9 px blob
  const GeometricPrompts k = derive_geometric(m, opt);
  EXPECT_EQ(k.points.size(), 1u);
  EXPECT_EQ(k.boxes.at(0).x_min, 8);
}

TEST(PromptGen, CentroidOutsideTheShapeSnapsToAMember) {
  // U shape: the centroid falls in the notch
  Tensor m = rect_map(10, 1, 8, 1, 8);
  for (int64_t y = 1; y <= 6; ++y)
    for (int64_t x = 3; x <= 6; ++x) m.at(y, x) = 0.0;
  const GeometricPrompts g = derive_geometric(m, GeometricOptions{});
  ASSERT_EQ(g.points.size(), 1u);
  const auto x = static_cast<int64_t>(g.points[0].x), y = static_cast<int64_t>(g.points[0].y);
  EXPECT_EQ(m.at(y, x), 1.0);
  std::vector<uint8_t> fg(100);
  for (int64_t i = 0; i < 100; ++i) fg[static_cast<size_t>(i)] = m[i] > 0.5;
  const auto e = testing::oracle::derive(fg, 10, 10, 0.1, 3);
  ASSERT_EQ(e.points.size(), 1u);
  EXPECT_EQ(e.points[0], std::make_pair(x, y));
}

TEST(PromptGen, MaskPromptIsTheResampledRawMap) {
  GeometricOptions opt;
  opt.mask_size = 32;
  const GeometricPrompts g = derive_geometric(Tensor({8, 8}, 0.3), opt);
  ASSERT_EQ(g.mask.shape(), (Shape{32, 32}));
  for (double v : g.mask.values()) ASSERT_NEAR(v, 0.3, 1e-15);
}

TEST(PromptGen, ConnectedComponentsUseFourConnectivity) {
  // diagonal neighbours are separate components
  const std::vector<uint8_t> mask = {1, 0, 0,
                                     0, 1, 0,
                                     0, 1, 1};
  const auto comps = connected_components(mask, 3, 3);
  ASSERT_EQ(comps.size(), 2u);
  EXPECT_EQ(comps[0].area, 1);
  EXPECT_EQ(comps[1].area, 3);
  EXPECT_THROW(connected_components(mask, 2, 3), ShapeError);
}

class Assembly : public ::testing::Test {
 protected:
  RunConfig cfg = testing::tiny_config();
  ParameterRegistry reg;
  Foundation f{cfg, reg, 0};
  ag::Var p_sem = ag::Var::constant(random_tensor({1, 30, cfg.embed_dim}, 7));
};

TEST_F(Assembly, TokenCounts) {
  GeometricPrompts geo;
  geo.boxes.push_back({1, 1, 20, 20});
  geo.points.push_back({5, 5, 1});
  geo.mask = Tensor({f.prompt_encoder.mask_size(), f.prompt_encoder.mask_size()}, 0.5);
  const PromptEmbeddings full = assemble_decoder_inputs(p_sem, geo, f.prompt_encoder);
  EXPECT_EQ(full.sparse.shape(), (Shape{1, 33, cfg.embed_dim}));
  EXPECT_EQ(full.dense.shape(), (Shape{1, cfg.embed_dim, 4, 4}));

  GeometricPrompts fallback;
  fallback.points.push_back({5, 5, 1});
  EXPECT_EQ(assemble_decoder_inputs(p_sem, fallback, f.prompt_encoder).sparse.dim(1), 31);

  const PromptEmbeddings geo_only = assemble_decoder_inputs(ag::Var(), geo, f.prompt_encoder);
  EXPECT_EQ(geo_only.sparse.dim(1), 3);

  const PromptEmbeddings sem_only = assemble_decoder_inputs(p_sem, geo, f.prompt_encoder, false);
  EXPECT_EQ(sem_only.sparse.dim(1), 30);
  EXPECT_TRUE(sem_only.dense.value().identical(f.prompt_encoder.no_mask_dense(1).value()));

  // semantic tokens follow the geometric ones unchanged
  const Tensor& s = full.sparse.value();
  for (int64_t c = 0; c < cfg.embed_dim; ++c) EXPECT_EQ(s.at(0, 3, c), p_sem.value().at(0, 0, c));
}

TEST_F(Assembly, ChannelMismatchIsAnError) {
  const ag::Var bad = ag::Var::constant(random_tensor({1, 30, cfg.embed_dim + 1}, 8));
  EXPECT_THROW(assemble_decoder_inputs(bad, GeometricPrompts{}, f.prompt_encoder), ShapeError);
}

}  // namespace
}  // namespace sammese
