#include <gtest/gtest.h>

#include <cmath>

#include "mer/nn/blocks.hpp"
#include "mer/tensor/gradcheck.hpp"

namespace mer::nn {
namespace {

using TD = Tensor<double>;

Index conv_params(Index in, Index out, Index k) { return out * in * k * k + out; }

template <typename Block>
TD zero_weight_forward(Block& block, const TD& x) {
  fill_parameters<double>(block, 0.0);
  return block.forward(x);
}

TEST(BlockSpec, Validation) {
  EXPECT_THROW(Cbam<double>(BlockSpec::cbam(6, 4)), std::invalid_argument);
  EXPECT_NO_THROW(Cbam<double>(BlockSpec::cbam(8, 4)));
  EXPECT_THROW(BasicBlock<double>(BlockSpec::basic(0, 4)), std::invalid_argument);
  EXPECT_THROW(BasicBlock<double>(BlockSpec::basic(4, 4, 0)), std::invalid_argument);
  EXPECT_THROW(validate(BlockSpec::basic(4, 4), BlockKind::cbam), std::invalid_argument);
  EXPECT_THROW(InceptionModule<double>(BlockSpec::inception(4, {8, 0, 8, 8})), std::invalid_argument);
}

TEST(BlockSpec, BottleneckMidWidth) {
  EXPECT_EQ(bottleneck_mid(BlockSpec::bottleneck(64, 64)), 16);
  EXPECT_EQ(bottleneck_mid(BlockSpec::bottleneck(8, 6)), 1);
  EXPECT_EQ(bottleneck_mid(BlockSpec::bottleneck(8, 3)), 1);
}

TEST(Shortcut, IdentityOnlyWhenShapesMatch) {
  EXPECT_TRUE(Shortcut<double>(8, 8, 1).is_identity());
  EXPECT_FALSE(Shortcut<double>(8, 8, 2).is_identity());
  EXPECT_FALSE(Shortcut<double>(8, 16, 1).is_identity());
}

TEST(BasicBlock, ZeroWeightsPassNonNegativeInputExactly) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Index c = 1 + static_cast<Index>(rng.index(8));
    BasicBlock<double> block(BlockSpec::basic(c, c));
    auto x = rng.uniform_tensor<double>({2, c, 5, 6}, 0.0, 10.0);
    x[0] = 0.0;
    EXPECT_EQ(zero_weight_forward(block, x).values(), x.values());
  }
}

TEST(Bottleneck, ZeroWeightsPassNonNegativeInputExactly) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Index c = 1 + static_cast<Index>(rng.index(16));
    Bottleneck<double> block(BlockSpec::bottleneck(c, c));
    auto x = rng.uniform_tensor<double>({1, c, 4, 7}, 0.0, 1e6);
    EXPECT_EQ(zero_weight_forward(block, x).values(), x.values());
  }
}

TEST(Residual3Block, ZeroWeightsPassNonNegativeInputExactly) {
  Residual3Block<double> block(BlockSpec::residual3(5, 5));
  Rng rng(3);
  auto x = rng.uniform_tensor<double>({2, 5, 6, 6}, 0.0, 3.0);
  EXPECT_EQ(zero_weight_forward(block, x).values(), x.values());
}

TEST(BasicBlock, StrideTwoShapeAndParams) {
  BasicBlock<double> block(BlockSpec::basic(16, 32, 2));
  Rng rng(4);
  block.init(rng);
  EXPECT_EQ(block.forward(TD::zeros({1, 16, 8, 8})).shape(), (Shape{1, 32, 4, 4}));
  EXPECT_EQ(count_parameters<double>(block),
            conv_params(16, 32, 3) + conv_params(32, 32, 3) + conv_params(16, 32, 1));
  EXPECT_FALSE(block.shortcut().is_identity());
}

TEST(Bottleneck, ShapeAndFewerParamsThanBasic) {
  Bottleneck<double> b(BlockSpec::bottleneck(64, 64));
  Rng rng(5);
  b.init(rng);
  EXPECT_EQ(b.forward(TD::zeros({1, 64, 8, 8})).shape(), (Shape{1, 64, 8, 8}));
  Bottleneck<double> wide(BlockSpec::bottleneck(256, 256));
  BasicBlock<double> basic(BlockSpec::basic(256, 256));
  const Index bottleneck_params = count_parameters<double>(wide);
  EXPECT_EQ(bottleneck_params, conv_params(256, 64, 1) + conv_params(64, 64, 3) + conv_params(64, 256, 1));
  EXPECT_LT(bottleneck_params, count_parameters<double>(basic));
}

TEST(Inception, ConcatShape) {
  InceptionModule<double> m(BlockSpec::inception(16, {8, 8, 8, 8}));
  Rng rng(6);
  m.init(rng);
  EXPECT_EQ(m.out_channels(), 32);
  EXPECT_EQ(m.forward(TD::zeros({1, 16, 8, 8})).shape(), (Shape{1, 32, 8, 8}));
}

// Property: output channels equal the branch-width sum and H×W is kept.
TEST(Inception, ConcatConsistencyOnRandomWidths) {
  Rng rng(7);
  for (int trial = 0; trial < 15; ++trial) {
    std::array<Index, 4> widths{};
    for (auto& w : widths) w = 1 + static_cast<Index>(rng.index(5));
    const Index in = 1 + static_cast<Index>(rng.index(6));
    const Index h = 1 + static_cast<Index>(rng.index(9)), w = 1 + static_cast<Index>(rng.index(9));
    InceptionModule<double> m(BlockSpec::inception(in, widths));
    m.init(rng);
    auto y = m.forward(rng.uniform_tensor<double>({2, in, h, w}, -1, 1));
    EXPECT_EQ(y.shape(), (Shape{2, widths[0] + widths[1] + widths[2] + widths[3], h, w}));
  }
}

TEST(Inception, ZeroInputZeroBiasGivesZero) {
  InceptionModule<double> m(BlockSpec::inception(4, {3, 2, 2, 1}));
  Rng rng(8);
  m.init(rng);
  m.visit("", [](const std::string& name, TD& p) {
    if (name.ends_with("bias")) {
      for (double& v : p.values()) v = 0.0;
    }
  });
  const auto y = m.forward(TD::zeros({1, 4, 5, 5}));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Cbam, ZeroInputGivesZero) {
  Cbam<double> cbam(BlockSpec::cbam(8, 4));
  Rng rng(9);
  cbam.init(rng);
  const auto y = cbam.forward(TD::zeros({2, 8, 5, 5}));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Cbam, ZeroWeightsOnConstantGiveQuarter) {
  Cbam<double> cbam(BlockSpec::cbam(8, 4));
  fill_parameters<double>(cbam, 0.0);
  CbamTrace<double> trace;
  auto y = cbam.forward(TD::full({1, 8, 6, 6}, 1.7), &trace);
  for (double v : trace.channel_map.values()) EXPECT_EQ(v, 0.5);
  for (double v : trace.spatial_map.values()) EXPECT_EQ(v, 0.5);
  for (double v : y.values()) EXPECT_NEAR(v, 0.25 * 1.7, 1e-12);
}

TEST(Cbam, ParameterCount) {
  Cbam<double> cbam(BlockSpec::cbam(16, 4));
  // Shared MLP 16→4→16 with biases, 7×7 conv 2→1 with bias.
  EXPECT_EQ(count_parameters<double>(cbam), (16 * 4 + 4) + (4 * 16 + 16) + (2 * 49 + 1));
}

// Property over random shapes and weights: shape kept, attention maps in
// (0, 1), and elementwise attenuation with equality only at zero.
TEST(Cbam, AttentionRangeAndAttenuation) {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const Index r = 1 + static_cast<Index>(rng.index(4));
    const Index c = r * (1 + static_cast<Index>(rng.index(4)));
    const Index h = 1 + static_cast<Index>(rng.index(8)), w = 1 + static_cast<Index>(rng.index(8));
    Cbam<double> cbam(BlockSpec::cbam(c, r));
    cbam.init(rng);
    auto x = rng.uniform_tensor<double>({1 + static_cast<Index>(rng.index(2)), c, h, w}, -3, 3);
    CbamTrace<double> trace;
    auto y = cbam.forward(x, &trace);
    ASSERT_EQ(y.shape(), x.shape());
    for (double m : trace.channel_map.values()) {
      EXPECT_GT(m, 0.0);
      EXPECT_LT(m, 1.0);
    }
    for (double m : trace.spatial_map.values()) {
      EXPECT_GT(m, 0.0);
      EXPECT_LT(m, 1.0);
    }
    for (Index i = 0; i < x.numel(); ++i) {
      if (x[i] == 0.0) {
        EXPECT_EQ(y[i], 0.0);
      } else {
        EXPECT_LT(std::abs(y[i]), std::abs(x[i]));
      }
    }
  }
}

TEST(Blocks, GradientCheckAtTinySizes) {
  Rng rng(11);
  auto check = [&](auto& block, Index in, const char* what) {
    block.init(rng);
    std::vector<TD> wrt;
    block.visit("", [&](const std::string&, TD& p) {
      for (double& v : p.values()) v += rng.uniform(-0.1, 0.1);
      wrt.push_back(p);
    });
    auto x = rng.uniform_tensor<double>({1, in, 5, 5}, -1, 1);
    wrt.push_back(x);
    auto report = grad_check([&] { return random_projection(block.forward(x), 17); }, wrt, 1e-6, 0, 1);
    EXPECT_LT(report.max_rel_error, 1e-4) << what;
  };
  BasicBlock<double> basic(BlockSpec::basic(3, 4, 2));
  check(basic, 3, "basic");
  Bottleneck<double> bottleneck(BlockSpec::bottleneck(4, 8));
  check(bottleneck, 4, "bottleneck");
  Residual3Block<double> r3(BlockSpec::residual3(3, 3));
  check(r3, 3, "residual3");
  InceptionModule<double> inception(BlockSpec::inception(3, {2, 2, 2, 2}));
  check(inception, 3, "inception");
  Cbam<double> cbam(BlockSpec::cbam(4, 2));
  check(cbam, 4, "cbam");
}

}  // namespace
}  // namespace mer::nn
