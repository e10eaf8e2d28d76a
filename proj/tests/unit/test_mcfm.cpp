// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "sammese/mcfm.hpp"
#include "test_support.hpp"

namespace sammese {
namespace {

using testing::random_tensor;

struct Fixture {
  ParameterRegistry reg;
  nn::Builder b{reg, 7, true};
};

ag::Var input(const Shape& s, uint64_t seed) { return ag::Var::constant(random_tensor(s, seed)); }

Tensor& val(const ag::Var& v) { return v.node()->value; }
void zero(const ag::Var& v) { val(v).fill(0.0); }

TEST(Mcfm, StageShapes) {
  Fixture f;
  const Mcfm m(f.b, 8, 1, McfmVariant::full);
  const ag::Var a = input({1, 8, 12, 12}, 1), x = input({1, 8, 12, 12}, 2);
  EXPECT_EQ(m.fuse_initial(a, x).shape(), (Shape{1, 8, 12, 12}));
  EXPECT_EQ(m.enhance_modality(a, x, false).shape(), (Shape{1, 8, 12, 12}));
  EXPECT_EQ(m.fuse_final(a, x).shape(), (Shape{1, 8, 12, 12}));
  EXPECT_EQ(m.forward(a, x).shape(), (Shape{1, 8, 12, 12}));
  EXPECT_THROW(m.fuse_initial(a, input({1, 8, 10, 12}, 3)), ShapeError);
  EXPECT_THROW(m.forward(input({1, 4, 12, 12}, 4), input({1, 4, 12, 12}, 5)), ShapeError);
}

TEST(Mcfm, SymmetricInitialConvIgnoresInputOrder) {
  Fixture f;
  const Mcfm m(f.b, 4, 1, McfmVariant::full);
  Tensor& w = val(m.conv_initial.weight);  // [4, 8, 3, 3]
  for (int64_t o = 0; o < 4; ++o)
    for (int64_t i = 0; i < 4; ++i)
      for (int64_t k = 0; k < 9; ++k) w[((o * 8) + i + 4) * 9 + k] = w[((o * 8) + i) * 9 + k];
  const ag::Var a = input({1, 4, 6, 6}, 1), b = input({1, 4, 6, 6}, 2);
  const Tensor ab = m.fuse_initial(a, b).value(), ba = m.fuse_initial(b, a).value();
  EXPECT_LT(max_abs_diff(ab, ba), 1e-14);
}

TEST(Mcfm, IdentityOnFirstHalfCopiesRgb) {
  Fixture f;
  const Mcfm m(f.b, 5, 1, McfmVariant::full);
  Tensor& w = val(m.conv_initial.weight);  // [5, 10, 3, 3]
  w.fill(0.0);
  zero(m.conv_initial.bias);
  for (int64_t o = 0; o < 5; ++o) w[((o * 10) + o) * 9 + 4] = 1.0;  // centre tap
  const ag::Var a = input({1, 5, 7, 7}, 3), b = input({1, 5, 7, 7}, 4);
  EXPECT_TRUE(m.fuse_initial(a, b).value().identical(a.value()));
}

TEST(Mcfm, ConstantKeysGiveUniformAttention) {
  Fixture f;
  const int64_t c = 6;
  const Mcfm m(f.b, c, 1, McfmVariant::full);
  const ag::Var f_m = input({1, c, 5, 5}, 5);
  Tensor mul({1, c, 5, 5});
  const Tensor token = random_tensor({c}, 6);
  for (int64_t k = 0; k < c; ++k)
    for (int64_t i = 0; i < 25; ++i) mul[k * 25 + i] = token[k];
  val(m.attn_rgb.v.bias) = random_tensor({c}, 7);
  const Tensor out = m.enhance_modality(f_m, ag::Var::constant(mul), false).value();
  // closed form: f_m + (W_v^T token + b_v) at every position
  const Tensor& wv = m.attn_rgb.v.weight.value();  // [in, out]
  const Tensor& bv = m.attn_rgb.v.bias.value();
  for (int64_t o = 0; o < c; ++o) {
    double val = bv[o];
    for (int64_t i = 0; i < c; ++i) val += token[i] * wv.at(i, o);
    for (int64_t p = 0; p < 25; ++p) {
      ASSERT_NEAR(out[o * 25 + p], f_m.value()[o * 25 + p] + val, 1e-12);
    }
  }
}

TEST(Mcfm, ZeroValueProjectionIsResidualIdentity) {
  Fixture f;
  const Mcfm m(f.b, 4, 2, McfmVariant::full);
  zero(m.attn_aux.v.weight);
  zero(m.attn_aux.v.bias);
  const ag::Var f_m = input({1, 4, 6, 6}, 8), mul = input({1, 4, 6, 6}, 9);
  EXPECT_TRUE(m.enhance_modality(f_m, mul, true).value().identical(f_m.value()));
}

TEST(Mcfm, FinalFusionLinearityCases) {
  Fixture f;
  const Mcfm m(f.b, 4, 1, McfmVariant::full);
  zero(m.conv_final.bias);
  const ag::Var z = ag::Var::constant(Tensor({1, 4, 6, 6}));
  for (double v : testing::values_of(m.fuse_final(z, z))) EXPECT_EQ(v, 0.0);

  Tensor& w = val(m.conv_final.weight);  // [4, 8, 3, 3]
  for (int64_t o = 0; o < 4; ++o)
    for (int64_t i = 0; i < 4; ++i)
      for (int64_t k = 0; k < 9; ++k) w[((o * 8) + i + 4) * 9 + k] = -w[((o * 8) + i) * 9 + k];
  const ag::Var x = input({1, 4, 6, 6}, 10);
  for (double v : testing::values_of(m.fuse_final(x, x))) EXPECT_NEAR(v, 0.0, 1e-14);
}

TEST(Mcfm, CoarseHeadRangeAndAnalyticValues) {
  Fixture f;
  const CoarseHead head(f.b, 8);
  const ag::Var s = input({1, 8, 12, 12}, 11);
  const ag::Var m = head.forward(s, 64);
  ASSERT_EQ(m.shape(), (Shape{1, 1, 64, 64}));
  for (double v : testing::values_of(m)) ASSERT_TRUE(v >= 0.0 && v <= 1.0);

  zero(head.proj.weight);
  zero(head.proj.bias);
  for (double v : testing::values_of(head.forward(s, 64))) ASSERT_EQ(v, 0.5);
  val(head.proj.bias)[0] = 10.0;
  for (double v : testing::values_of(head.forward(s, 64))) ASSERT_GE(v, 0.9999);
  EXPECT_THROW(head.forward(s, 8), ShapeError);
}

TEST(Mcfm, EndToEndGradientToCoarseMap) {
  for (McfmVariant v : {McfmVariant::full, McfmVariant::no_mcfm, McfmVariant::complex_design}) {
    Fixture f;
    const Mcfm m(f.b, 4, 1, v);
    const CoarseHead head(f.b, 4);
    auto rgb = ag::Var::leaf(random_tensor({1, 4, 6, 6}, 12), true);
    auto aux = ag::Var::leaf(random_tensor({1, 4, 6, 6}, 13), true);
    const Tensor probe = random_tensor({1, 1, 8, 8}, 14);
    std::vector<std::pair<std::string, ag::Var>> leaves = {{"rgb", rgb}, {"aux", aux}};
    for (const auto& e : f.reg.entries()) leaves.emplace_back(e.name, e.var);
    const auto r = testing::grad_check(
        [&] { return ag::weighted_sum(head.forward(m.forward(rgb, aux), 8), probe); }, leaves);
    EXPECT_LT(r.max_rel_error, 1e-4) << to_string(v) << ": " << r.worst;
  }
}

TEST(Mcfm, VariantsOwnDifferentParameterSets) {
  auto count = [](McfmVariant v) {
    Fixture f;
    const Mcfm m(f.b, 8, 1, v);
    return f.reg.trainable_count();
  };
  const int64_t full = count(McfmVariant::full);
  EXPECT_EQ(count(McfmVariant::no_mcfm), 2 * 8 * 9 * 8 + 8);
  EXPECT_GT(full, count(McfmVariant::no_mcfm));
  EXPECT_GT(count(McfmVariant::complex_design), full);
}

}  // namespace
}  // namespace sammese
