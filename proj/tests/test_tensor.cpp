#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mer/tensor/adam.hpp"
#include "mer/tensor/gradcheck.hpp"
#include "mer/tensor/ops.hpp"
#include "mer/tensor/rng.hpp"

namespace mer {
namespace {

using TD = Tensor<double>;

// Direct seven-loop convolution, written independently of the im2col path.
std::vector<double> naive_conv(const TD& x, const TD& w, const std::vector<double>& bias, Index stride, Index pad) {
  const Index n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const Index oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  std::vector<double> out;
  for (Index b = 0; b < n; ++b)
    for (Index o = 0; o < co; ++o)
      for (Index y = 0; y < oh; ++y)
        for (Index xx = 0; xx < ow; ++xx) {
          double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(o)];
          for (Index c = 0; c < ci; ++c)
            for (Index i = 0; i < kh; ++i)
              for (Index j = 0; j < kw; ++j) {
                const Index sy = y * stride + i - pad, sx = xx * stride + j - pad;
                if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
                acc += x.at(b, c, sy, sx) * w.at(o, c, i, j);
              }
          out.push_back(acc);
        }
  return out;
}

std::vector<double> naive_maxpool(const TD& x, Index k, Index s) {
  std::vector<double> out;
  const Index oh = (x.dim(2) - k) / s + 1, ow = (x.dim(3) - k) / s + 1;
  for (Index b = 0; b < x.dim(0); ++b)
    for (Index c = 0; c < x.dim(1); ++c)
      for (Index y = 0; y < oh; ++y)
        for (Index xx = 0; xx < ow; ++xx) {
          double m = -std::numeric_limits<double>::infinity();
          for (Index i = 0; i < k; ++i)
            for (Index j = 0; j < k; ++j) m = std::max(m, x.at(b, c, y * s + i, xx * s + j));
          out.push_back(m);
        }
  return out;
}

void expect_near_all(const std::vector<double>& got, const std::vector<double>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "at " << i;
}

TEST(Tensor, ShapeMustMatchValueCount) {
  EXPECT_THROW(TD::from({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(TD::zeros({2, 0}), ShapeError);
  EXPECT_EQ(TD::zeros({2, 3, 4}).numel(), 24);
}

TEST(Conv2d, TwoByTwoKernelOnTwoByTwoImage) {
  auto x = TD::from({1, 1, 2, 2}, {1, 2, 3, 4});
  auto w = TD::from({1, 1, 2, 2}, {1, 0, 0, 1});
  auto y = conv2d(x, w, TD());
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.item(), 5.0);
}

TEST(Conv2d, IdentityKernelCopiesInput) {
  Rng rng(3);
  auto x = rng.uniform_tensor<double>({2, 1, 5, 7}, -1, 1);
  auto y = conv2d(x, TD::from({1, 1, 1, 1}, {1.0}), TD());
  EXPECT_EQ(y.values(), x.values());
}

TEST(Conv2d, FaceSizedShapeWithStrideTwo) {
  EXPECT_EQ(window_out(282, 3, 2, 1), 141);
  EXPECT_EQ(window_out(231, 3, 2, 1), 116);
  auto x = TD::zeros({1, 3, 282, 231});
  auto y = conv2d(x, TD::zeros({8, 3, 3, 3}), TD(), {2, 1});
  EXPECT_EQ(y.shape(), (Shape{1, 8, 141, 116}));
}

TEST(Conv2d, ChannelMismatchNamesBothShapes) {
  try {
    conv2d(TD::zeros({1, 3, 4, 4}), TD::zeros({2, 2, 3, 3}), TD());
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(to_string(Shape{1, 3, 4, 4})), std::string::npos) << msg;
    EXPECT_NE(msg.find(to_string(Shape{2, 2, 3, 3})), std::string::npos) << msg;
  }
}

TEST(Conv2d, KernelLargerThanPaddedInputRejected) {
  EXPECT_THROW(conv2d(TD::zeros({1, 1, 2, 2}), TD::zeros({1, 1, 3, 3}), TD()), ShapeError);
}

// Property: random geometry, im2col path equals the direct oracle and the
// output extent follows the floor formula.
TEST(Conv2d, MatchesDirectOracleOnRandomGeometry) {
  Rng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const Index k = 1 + static_cast<Index>(rng.index(5));
    const Index stride = 1 + static_cast<Index>(rng.index(3));
    const Index pad = static_cast<Index>(rng.index(3));
    const Index h = std::max<Index>(1, k - 2 * pad) + static_cast<Index>(rng.index(8));
    const Index w = std::max<Index>(1, k - 2 * pad) + static_cast<Index>(rng.index(8));
    const Index n = 1 + static_cast<Index>(rng.index(2)), ci = 1 + static_cast<Index>(rng.index(3)),
                co = 1 + static_cast<Index>(rng.index(4));
    auto x = rng.uniform_tensor<double>({n, ci, h, w}, -1, 1);
    auto wt = rng.uniform_tensor<double>({co, ci, k, k}, -1, 1);
    const bool with_bias = rng.coin();
    auto b = with_bias ? rng.uniform_tensor<double>({co}, -1, 1) : TD();
    auto y = conv2d(x, wt, b, {stride, pad});
    const Index oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
    ASSERT_EQ(y.shape(), (Shape{n, co, oh, ow})) << "trial " << trial;
    expect_near_all(y.values(), naive_conv(x, wt, with_bias ? b.values() : std::vector<double>{}, stride, pad),
                    1e-12);
  }
}

TEST(Elementwise, ReluSigmoidAddMul) {
  auto x = TD::from({2}, {-1.0, 2.0});
  EXPECT_EQ(relu(x).values(), (std::vector<double>{0.0, 2.0}));
  EXPECT_EQ(sigmoid(TD::scalar(0.0)).item(), 0.5);
  Rng rng(5);
  auto a = rng.uniform_tensor<double>({2, 3, 4, 5}, -3, 3);
  EXPECT_EQ(add(a, TD::zeros(a.shape())).values(), a.values());
  EXPECT_EQ(mul(a, TD::full(a.shape(), 1.0)).values(), a.values());
}

TEST(Elementwise, BroadcastAlongSingletons) {
  auto a = TD::from({2, 3, 1, 1}, {1, 2, 3, 4, 5, 6});
  auto b = TD::from({1, 1, 2, 2}, {10, 20, 30, 40});
  auto y = add(a, b);
  ASSERT_EQ(y.shape(), (Shape{2, 3, 2, 2}));
  EXPECT_EQ(y.at(1, 2, 1, 0), 6.0 + 30.0);
  auto m = mul(a, b);
  EXPECT_EQ(m.at(0, 1, 0, 1), 2.0 * 20.0);
}

TEST(Elementwise, NonBroadcastableRejected) {
  EXPECT_THROW(add(TD::zeros({2, 3}), TD::zeros({3, 2})), ShapeError);
  EXPECT_THROW(mul(TD::zeros({2, 3}), TD::zeros({2, 3, 1})), ShapeError);
}

TEST(MaxPool, ExamplesAndOracle) {
  EXPECT_EQ(maxpool2d(TD::from({1, 1, 2, 2}, {1, 2, 3, 4}), 2, 2).item(), 4.0);
  std::vector<double> ramp(16);
  std::iota(ramp.begin(), ramp.end(), 0.0);
  EXPECT_EQ(maxpool2d(TD::from({1, 1, 4, 4}, ramp), 2, 2).values(), (std::vector<double>{5, 7, 13, 15}));
  auto c = maxpool2d(TD::full({1, 2, 5, 5}, 0.7), 2, 2);
  for (double v : c.values()) EXPECT_EQ(v, 0.7);
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const Index k = 1 + static_cast<Index>(rng.index(3)), s = 1 + static_cast<Index>(rng.index(3));
    const Index h = k + static_cast<Index>(rng.index(6)), w = k + static_cast<Index>(rng.index(6));
    auto x = rng.uniform_tensor<double>({1, 2, h, w}, -1, 1);
    auto y = maxpool2d(x, k, s);
    ASSERT_EQ(y.shape(), (Shape{1, 2, (h - k) / s + 1, (w - k) / s + 1}));
    EXPECT_EQ(y.values(), naive_maxpool(x, k, s));
  }
}

TEST(MaxPool, WindowLargerThanInputRejected) {
  EXPECT_THROW(maxpool2d(TD::zeros({1, 1, 2, 3}), 3, 1), ShapeError);
}

TEST(MaxPool, TieSendsGradientToFirstOccurrence) {
  auto x = TD::full({1, 1, 2, 2}, 1.0, true);
  backward(sum(maxpool2d(x, 2, 2)));
  EXPECT_EQ(x.grad(), (std::vector<double>{1, 0, 0, 0}));
}

TEST(AvgPool, PaddingCountsInDivisor) {
  auto y = avgpool2d(TD::full({1, 1, 3, 3}, 9.0), 3, 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 0), 4 * 9.0 / 9.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 1, 1), 9.0);
}

TEST(AdaptivePool, BinsCoverInput) {
  std::vector<double> v(5 * 5);
  std::iota(v.begin(), v.end(), 0.0);
  auto x = TD::from({1, 1, 5, 5}, v);
  auto avg = adaptive_avg_pool2d(x, 1, 1);
  EXPECT_DOUBLE_EQ(avg.item(), 12.0);
  auto mx = adaptive_max_pool2d(x, 2, 2);
  // Bins rows/cols [0,3) and [2,5).
  EXPECT_EQ(mx.values(), (std::vector<double>{12, 14, 22, 24}));
}

TEST(ChannelReductions, MeanAndMax) {
  auto x = TD::from({1, 3, 1, 2}, {1, -4, 2, 5, 6, 1});
  EXPECT_EQ(channel_mean(x).values(), (std::vector<double>{3.0, 2.0 / 3.0}));
  EXPECT_EQ(channel_max(x).values(), (std::vector<double>{6, 5}));
}

TEST(Concat, StacksChannelsInOrder) {
  auto a = TD::from({1, 1, 1, 2}, {1, 2});
  auto b = TD::from({1, 2, 1, 2}, {3, 4, 5, 6});
  auto y = concat_channels<double>({a, b});
  EXPECT_EQ(y.shape(), (Shape{1, 3, 1, 2}));
  EXPECT_EQ(y.values(), (std::vector<double>{1, 2, 3, 4, 5, 6}));
  EXPECT_THROW(concat_channels<double>({a, TD::zeros({1, 1, 2, 2})}), ShapeError);
}

TEST(Linear, Examples) {
  auto y = linear(TD::from({1, 2}, {1, 2}), TD::from({1, 2}, {3, 4}), TD::from({1}, {5}));
  EXPECT_EQ(y.item(), 16.0);
  Rng rng(2);
  auto x = rng.uniform_tensor<double>({2, 3}, -1, 1);
  auto eye = TD::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_EQ(linear(x, eye, TD::zeros({3})).values(), x.values());
  // Rows are independent: each batch row equals a batch-1 call.
  auto w = rng.uniform_tensor<double>({4, 3}, -1, 1);
  auto b = rng.uniform_tensor<double>({4}, -1, 1);
  auto both = linear(x, w, b);
  for (Index r = 0; r < 2; ++r) {
    auto row = TD::from({1, 3}, {x[r * 3], x[r * 3 + 1], x[r * 3 + 2]});
    auto single = linear(row, w, b);
    for (Index j = 0; j < 4; ++j) EXPECT_EQ(both[r * 4 + j], single[j]);
  }
  EXPECT_THROW(linear(TD::zeros({1, 2}), TD::zeros({1, 3}), TD()), ShapeError);
}

TEST(CrossEntropy, Examples) {
  const std::vector<int> one{1};
  EXPECT_NEAR(softmax_cross_entropy(TD::from({1, 2}, {1, 2}), std::span<const int>(one)).item(),
              std::log1p(std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(softmax_cross_entropy(TD::from({1, 2}, {1, 2}), std::span<const int>(one)).item(), 0.31326, 1e-5);
  const std::vector<int> labels{0, 3, 4};
  EXPECT_NEAR(softmax_cross_entropy(TD::full({3, 5}, 0.7), std::span<const int>(labels)).item(), std::log(5.0),
              1e-15);
  EXPECT_LT(softmax_cross_entropy(TD::from({1, 3}, {0, 800, 0}), std::span<const int>(one)).item(), 1e-300);
  const std::vector<int> bad{5};
  EXPECT_THROW(softmax_cross_entropy(TD::zeros({1, 5}), std::span<const int>(bad)), std::out_of_range);
}

TEST(CrossEntropy, GradientIsSoftmaxMinusOneHotOverN) {
  Rng rng(4);
  auto logits = rng.uniform_tensor<double>({3, 4}, -2, 2, true);
  const std::vector<int> labels{2, 0, 3};
  backward(softmax_cross_entropy(logits, std::span<const int>(labels)));
  const auto p = softmax_rows(logits);
  const auto g = logits.grad();
  for (Index r = 0; r < 3; ++r)
    for (Index c = 0; c < 4; ++c) {
      const auto i = static_cast<std::size_t>(r * 4 + c);
      const double onehot = labels[static_cast<std::size_t>(r)] == c ? 1.0 : 0.0;
      EXPECT_NEAR(g[i], (p[i] - onehot) / 3.0, 1e-15);
    }
}

TEST(CrossEntropy, SoftmaxRowsSumToOneAndLossNonNegative) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.index(4)), c = 2 + static_cast<Index>(rng.index(6));
    auto logits = rng.uniform_tensor<double>({n, c}, -30, 30);
    const auto p = softmax_rows(logits);
    for (Index r = 0; r < n; ++r) {
      double s = 0;
      for (Index j = 0; j < c; ++j) s += p[static_cast<std::size_t>(r * c + j)];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (auto& l : labels) l = static_cast<int>(rng.index(static_cast<std::size_t>(c)));
    EXPECT_GE(softmax_cross_entropy(logits, std::span<const int>(labels)).item(), 0.0);
  }
}

TEST(Backward, SumAndSquare) {
  Rng rng(1);
  auto x = rng.uniform_tensor<double>({2, 3}, -1, 1, true);
  backward(sum(x));
  EXPECT_EQ(x.grad(), std::vector<double>(6, 1.0));
  x.zero_grad();
  backward(sum(mul(x, x)));
  for (Index i = 0; i < 6; ++i) EXPECT_EQ(x.grad()[static_cast<std::size_t>(i)], 2 * x[i]);
}

TEST(Backward, FanOutAccumulates) {
  auto x = TD::full({2, 2}, 3.0, true);
  backward(add(sum(x), sum(x)));
  EXPECT_EQ(x.grad(), std::vector<double>(4, 2.0));
}

TEST(Backward, DiamondGraphVisitsEachNodeOnce) {
  auto x = TD::full({3}, 1.5, true);
  auto y = relu(x);
  auto loss = sum(mul(y, y));  // y used twice by one node, once more below
  auto total = add(loss, sum(y));
  EXPECT_EQ(Graph<double>::build(total).size(), 6u);
  backward(total);
  EXPECT_EQ(x.grad(), std::vector<double>(3, 2 * 1.5 + 1));
}

TEST(Backward, NonScalarRejected) {
  auto x = TD::zeros({2}, true);
  EXPECT_THROW(backward(relu(x)), ShapeError);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  auto x = TD::full({2}, 1.0, true);
  TD y;
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_mode_enabled());
    y = sum(relu(x));
  }
  EXPECT_TRUE(grad_mode_enabled());
  EXPECT_TRUE(y.node()->parents.empty());
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Rng rng(6);
  std::vector<TD> params{rng.uniform_tensor<double>({3, 2}, -1, 1, true)};
  const auto before = params[0].values();
  auto state = make_adam_state(params);
  for (int i = 0; i < 5; ++i) adam_step(params, state, 1e-3);
  EXPECT_EQ(params[0].values(), before);
  EXPECT_EQ(state.t, 5);
}

TEST(Adam, FirstStepHandValue) {
  std::vector<TD> params{TD::scalar(0.0, true)};
  params[0].mutable_grad()[0] = 0.1;
  auto state = make_adam_state(params);
  adam_step(params, state, 1e-3);
  EXPECT_NEAR(params[0].item(), -1e-3 * (0.1 / (0.1 + 1e-8)), 1e-18);
  EXPECT_NEAR(params[0].item(), -9.9999990e-4, 1e-11);
  EXPECT_EQ(state.t, 1);
  ASSERT_EQ(state.m[0].size(), 1u);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  for (double g : {1e-3, 1.0, 1e3}) {
    std::vector<TD> params{TD::scalar(0.0, true)};
    params[0].mutable_grad()[0] = g;
    auto state = make_adam_state(params);
    adam_step(params, state, 1e-3);
    EXPECT_NEAR(params[0].item(), -1e-3, 1e-3 * 1e-5) << "g=" << g;
  }
}

TEST(Adam, TwoStepsMatchScalarRecurrence) {
  std::vector<TD> params{TD::scalar(1.0, true)};
  auto state = make_adam_state(params);
  double m = 0, v = 0, theta = 1.0;
  const double grads[] = {0.3, -0.7, 0.2};
  for (int t = 1; t <= 3; ++t) {
    const double g = grads[t - 1];
    params[0].zero_grad();
    params[0].mutable_grad()[0] = g;
    adam_step(params, state, 0.01);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    theta -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(params[0].item(), theta, 1e-15);
  }
}

TEST(MacCounter, CountsConvAndLinear) {
  MacCounter conv_macs;
  conv2d(TD::zeros({1, 1, 4, 4}), TD::zeros({1, 1, 1, 1}), TD());
  EXPECT_EQ(conv_macs.count(), 16u);
  MacCounter lin;
  linear(TD::zeros({2, 3}), TD::zeros({4, 3}), TD());
  EXPECT_EQ(lin.count(), 2u * 4u * 3u);
}

TEST(GradCheck, LinearLayerIsExactToRounding) {
  Rng rng(12);
  auto w = rng.uniform_tensor<double>({4, 3}, -1, 1);
  auto b = rng.uniform_tensor<double>({4}, -1, 1);
  auto x = rng.uniform_tensor<double>({2, 3}, -1, 1);
  const double err = grad_check([&](const TD& p) { return random_projection(linear(p, w, b), 1); }, x, 1e-5);
  EXPECT_LT(err, 1e-7);
}

TEST(GradCheck, ConvReluAwayFromKinks) {
  Rng rng(13);
  auto x = rng.uniform_tensor<double>({1, 2, 5, 5}, -1, 1);
  auto w = rng.uniform_tensor<double>({3, 2, 3, 3}, -1, 1);
  auto b = rng.uniform_tensor<double>({3}, -1, 1);
  // Keep every pre-activation at least 1e-3 from zero.
  auto pre = conv2d(x, w, b, {1, 1});
  for (double v : pre.values()) ASSERT_GT(std::abs(v), 1e-3) << "reseed: point lies near a kink";
  const double err = grad_check([&](const TD& p) { return random_projection(relu(conv2d(p, w, b, {1, 1})), 2); },
                                x, 1e-6);
  EXPECT_LT(err, 1e-4);
}

TEST(GradCheck, StepOutsideRangeRejected) {
  auto f = [](const TD& p) { return sum(p); };
  EXPECT_THROW(grad_check(f, TD::zeros({2}), 1e-7), std::invalid_argument);
  EXPECT_THROW(grad_check(f, TD::zeros({2}), 1e-3), std::invalid_argument);
  EXPECT_NO_THROW(grad_check(f, TD::zeros({2}), 1e-6));
}

TEST(GradCheck, CorruptedBackwardIsCaught) {
  Rng rng(14);
  auto x = rng.uniform_tensor<double>({2, 6}, 0.5, 1.0);
  auto f = [](const TD& p) { return random_projection(sigmoid(p), 3); };
  EXPECT_LT(grad_check(f, x, 1e-6), 1e-6);
  BackwardFaultGuard fault("sigmoid", 1.5);
  EXPECT_GT(grad_check(f, x, 1e-6), 1e-2);
}

TEST(GradCheck, FaultGuardRestoresOnExit) {
  Rng rng(15);
  auto x = rng.uniform_tensor<double>({5}, -1, 1);
  auto f = [](const TD& p) { return random_projection(scale(p, 3.0), 4); };
  { BackwardFaultGuard fault("scale", 0.0); }
  EXPECT_LT(grad_check(f, x, 1e-6), 1e-8);
}

TEST(Determinism, RepeatedForwardIsBitIdentical) {
  auto run = [] {
    Rng rng(21);
    auto x = rng.uniform_tensor<float>({2, 3, 9, 9}, 0, 1);
    auto w = rng.uniform_tensor<float>({4, 3, 3, 3}, -1, 1);
    return sigmoid(maxpool2d(relu(conv2d(x, w, Tensor<float>(), {1, 1})), 2, 2)).values();
  };
  EXPECT_EQ(run(), run());
}

TEST(Finite, OpsKeepFiniteInputsFinite) {
  Rng rng(22);
  auto x = rng.uniform_tensor<double>({2, 3, 6, 6}, -50, 50);
  auto w = rng.uniform_tensor<double>({2, 3, 3, 3}, -5, 5);
  auto y = sigmoid(avgpool2d(relu(conv2d(x, w, TD(), {1, 1})), 3, 1, 1));
  const std::vector<int> labels{0, 1};
  auto loss = softmax_cross_entropy(reshape(adaptive_max_pool2d(y, 1, 1), {2, 2}), std::span<const int>(labels));
  for (double v : y.values()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_TRUE(std::isfinite(loss.item()));
}

}  // namespace
}  // namespace mer
