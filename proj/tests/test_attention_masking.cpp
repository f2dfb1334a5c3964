#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "samkd/attention.hpp"
#include "samkd/masking.hpp"

using namespace samkd;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor<double> random_tensor(int h, int w, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor<double> t(h, w, c);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

Tensor<double> from_values(int h, int w, int c, std::initializer_list<double> v) {
  Tensor<double> t(h, w, c);
  std::copy(v.begin(), v.end(), t.values().begin());
  return t;
}

}  // namespace

TEST(SpatialAttention, ZeroRegionIsOneHalf) {
  const auto a = spatial_attention(Tensor<double>(3, 2, 4), 0.7);
  for (double v : a.values()) EXPECT_EQ(v, 0.5);
}

TEST(SpatialAttention, ConstantRegionIsUniform) {
  const auto a = spatial_attention(Tensor<double>(3, 3, 2, 1.5), 1.0);
  for (double v : a.values()) EXPECT_EQ(v, a(0, 0, 0));
}

TEST(SpatialAttention, HandComputedNorms) {
  // Pixels (1,0,0), (1,1,0), (1,1,1), (2,0,0).
  const auto f = from_values(2, 2, 3, {1, 0, 0, 1, 1, 0, 1, 1, 1, 2, 0, 0});
  const auto a = spatial_attention(f, 1.0);
  EXPECT_NEAR(a(0, 0, 0), sig(1.0 / 3), 1e-15);
  EXPECT_NEAR(a(0, 1, 0), sig(2.0 / 3), 1e-15);
  EXPECT_NEAR(a(1, 0, 0), sig(1.0), 1e-15);
  EXPECT_NEAR(a(1, 1, 0), sig(4.0 / 3), 1e-15);
}

TEST(SpatialAttention, Monotone) {
  std::mt19937_64 rng(5);
  auto f = random_tensor(3, 3, 4, rng);
  const auto before = spatial_attention(f, 1.0);
  for (int k = 0; k < 4; ++k) f(1, 2, k) *= 1.5;
  const auto after = spatial_attention(f, 1.0);
  EXPECT_GE(after(1, 2, 0), before(1, 2, 0));
}

TEST(SpatialAttention, LargerTauMovesTowardOneHalf) {
  std::mt19937_64 rng(6);
  const auto f = random_tensor(4, 4, 3, rng, 2.0);
  const auto sharp = spatial_attention(f, 1.0), flat = spatial_attention(f, 4.0);
  for (std::size_t i = 0; i < sharp.size(); ++i)
    EXPECT_LT(std::abs(flat.values()[i] - 0.5), std::abs(sharp.values()[i] - 0.5));
}

TEST(ChannelAttention, ZeroAndConstant) {
  const auto zero = channel_attention(Tensor<double>(2, 3, 3), 1.0);
  for (double v : zero.values()) EXPECT_EQ(v, 0.5);
  const auto a = channel_attention(Tensor<double>(2, 2, 1, 0.8), 1.0);
  EXPECT_NEAR(a(0, 0, 0), sig(0.8), 1e-15);
}

TEST(ChannelAttention, HandComputedMeans) {
  // Channel 0 holds {1,2,3,4}, channel 1 holds {-1,0,1,0}.
  const auto f = from_values(2, 2, 2, {1, -1, 2, 0, 3, 1, 4, 0});
  const auto a = channel_attention(f, 2.0);
  EXPECT_NEAR(a(0, 0, 0), sig(2.5 / 2.0), 1e-15);
  EXPECT_NEAR(a(0, 0, 1), sig(0.0), 1e-15);
}

TEST(Attention, ChannelPermutationEquivariance) {
  std::mt19937_64 rng(8);
  const auto f = random_tensor(3, 2, 4, rng);
  const int perm[4] = {2, 0, 3, 1};
  Tensor<double> g(3, 2, 4);
  for (int h = 0; h < 3; ++h)
    for (int w = 0; w < 2; ++w)
      for (int c = 0; c < 4; ++c) g(h, w, c) = f(h, w, perm[c]);
  const auto af = teacher_attention(f, 1.0);
  const auto ag = teacher_attention(g, 1.0);
  for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(ag.channel(0, 0, c), af.channel(0, 0, perm[c]));
  for (std::size_t i = 0; i < af.spatial.size(); ++i)
    EXPECT_NEAR(ag.spatial.values()[i], af.spatial.values()[i], 1e-15);
}

TEST(Attention, NonPositiveTauRejected) {
  const Tensor<double> f(2, 2, 2);
  for (double tau : {0.0, -1.0, std::nan("")}) {
    try {
      teacher_attention(f, tau);
      ADD_FAILURE() << "tau " << tau;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InvalidHyperparameter);
    }
  }
}

TEST(Masks, UniformAttentionMasksEverything) {
  AttentionPair<double> a{Tensor<double>(3, 3, 1, 0.6), Tensor<double>(1, 1, 4, 0.6)};
  const auto m = make_masks(a, 0.95, 0.5);
  for (double v : m.spatial.values()) EXPECT_EQ(v, 0.0);
  for (double v : m.channel.values()) EXPECT_EQ(v, 0.0);
}

TEST(Masks, LargeOmegaMasksNothing) {
  AttentionPair<double> a{from_values(2, 2, 1, {0.2, 0.4, 0.6, 0.8}),
                          from_values(1, 1, 2, {0.1, 0.9})};
  const auto m = make_masks(a, 2.0, 2.0);
  for (double v : m.spatial.values()) EXPECT_EQ(v, 1.0);
  for (double v : m.channel.values()) EXPECT_EQ(v, 1.0);
}

TEST(Masks, RelativeThresholdExample) {
  AttentionPair<double> a{from_values(2, 2, 1, {0.2, 0.4, 0.6, 0.8}),
                          from_values(1, 1, 2, {0.3, 0.7})};
  const auto m = make_masks(a, 1.0, 1.0);
  const std::vector<double> expected{1, 1, 0, 0};
  for (int i = 0; i < 4; ++i) EXPECT_EQ(m.spatial.values()[i], expected[i]);
  EXPECT_EQ(m.channel(0, 0, 0), 1.0);
  EXPECT_EQ(m.channel(0, 0, 1), 0.0);
}

TEST(Masks, AbsoluteMode) {
  AttentionPair<double> a{from_values(2, 2, 1, {0.2, 0.4, 0.6, 0.8}),
                          from_values(1, 1, 2, {0.3, 0.7})};
  const auto m = make_masks(a, 0.55, 0.65, ThresholdMode::Absolute);
  const std::vector<double> expected{1, 1, 0, 0};
  for (int i = 0; i < 4; ++i) EXPECT_EQ(m.spatial.values()[i], expected[i]);
  EXPECT_EQ(m.channel(0, 0, 0), 1.0);
  EXPECT_EQ(m.channel(0, 0, 1), 0.0);
}

TEST(Masks, BinaryAndCountMatchesRule) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const auto f = random_tensor(4, 5, 6, rng);
    const auto a = teacher_attention(f, 1.0);
    const auto m = make_masks(a, 0.95, 0.5);
    double mean = 0;
    for (double v : a.spatial.values()) mean += v;
    mean /= a.spatial.size();
    int zeros = 0, attentive = 0;
    for (std::size_t i = 0; i < m.spatial.size(); ++i) {
      const double v = m.spatial.values()[i];
      ASSERT_TRUE(v == 0.0 || v == 1.0);
      zeros += v == 0.0;
      attentive += a.spatial.values()[i] >= 0.95 * mean;
    }
    EXPECT_EQ(zeros, attentive);
    for (double v : m.channel.values()) ASSERT_TRUE(v == 0.0 || v == 1.0);
  }
}

TEST(Masks, NonPositiveOmegaRejected) {
  AttentionPair<double> a{Tensor<double>(2, 2, 1, 0.5), Tensor<double>(1, 1, 2, 0.5)};
  EXPECT_THROW(make_masks(a, 0.0, 0.5), Error);
  EXPECT_THROW(make_masks(a, 0.95, -1.0), Error);
}

TEST(ApplyMasks, ExampleWithIdentityAlign) {
  const Tensor<double> f(2, 2, 2, 1.0);
  MaskPair<double> m{from_values(2, 2, 1, {1, 0, 1, 0}), from_values(1, 1, 2, {1, 0})};
  const auto out = apply_masks(f, m, AlignTransform<double>::identity(2));
  for (int p = 0; p < 4; ++p)
    for (int c = 0; c < 2; ++c) {
      EXPECT_EQ(out.spatial.values()[p * 2 + c], p % 2 == 0 ? 1.0 : 0.0);
      EXPECT_EQ(out.channel.values()[p * 2 + c], c == 0 ? 1.0 : 0.0);
    }
}

TEST(ApplyMasks, OnesMaskGivesAlignedAndZeroMaskAnnihilates) {
  std::mt19937_64 rng(4);
  AlignTransform<double> align("a", 3, 5, rng);
  const auto f = random_tensor(3, 3, 3, rng);
  MaskPair<double> ones{Tensor<double>(3, 3, 1, 1.0), Tensor<double>(1, 1, 5, 1.0)};
  const auto out = apply_masks(f, ones, align);
  EXPECT_EQ(out.spatial, align(f));
  EXPECT_EQ(out.channel, align(f));
  MaskPair<double> zero{Tensor<double>(3, 3, 1), Tensor<double>(1, 1, 5, 1.0)};
  const auto annihilated = apply_masks(f, zero, align);
  for (double v : annihilated.spatial.values()) EXPECT_EQ(v, 0.0);
}

TEST(ApplyMasks, LinearInFeatures) {
  std::mt19937_64 rng(9);
  AlignTransform<double> align("a", 4, 4, rng);
  fill_normal(align.conv().weight(), 0.5, rng);
  const auto f = random_tensor(3, 4, 4, rng), g = random_tensor(3, 4, 4, rng);
  const auto masks = make_masks(teacher_attention(random_tensor(3, 4, 4, rng), 1.0), 0.95, 0.5);
  const double a = 0.7, b = -1.3;
  Tensor<double> combo = f * a;
  combo += g * b;
  const auto lhs = apply_masks(combo, masks, align);
  const auto rf = apply_masks(f, masks, align), rg = apply_masks(g, masks, align);
  for (std::size_t i = 0; i < lhs.spatial.size(); ++i) {
    EXPECT_NEAR(lhs.spatial.values()[i], a * rf.spatial.values()[i] + b * rg.spatial.values()[i],
                1e-12);
    EXPECT_NEAR(lhs.channel.values()[i], a * rf.channel.values()[i] + b * rg.channel.values()[i],
                1e-12);
  }
}

TEST(ApplyMasks, ShapeMismatchRejected) {
  const Tensor<double> f(2, 2, 3);
  MaskPair<double> m{Tensor<double>(3, 2, 1, 1.0), Tensor<double>(1, 1, 3, 1.0)};
  EXPECT_THROW(apply_masks(f, m, AlignTransform<double>::identity(3)), Error);
  EXPECT_THROW(apply_masks(f, m, AlignTransform<double>::identity(4)), Error);
}
