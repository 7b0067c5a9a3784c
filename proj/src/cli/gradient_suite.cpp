#include "mer/cli/gradient_suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "mer/model/dbfem.hpp"
#include "mer/nn/blocks.hpp"
#include "mer/tensor/ops.hpp"
#include "mer/tensor/rng.hpp"

namespace mer::cli {

namespace {

using D = double;
using TensorD = Tensor<D>;

TensorD input(Rng& rng, const Shape& shape) { return rng.uniform_tensor<D>(shape, -1.0, 1.0, true); }

// Case over op inputs only: loss = random projection of the op output.
GradientCase op_case(const std::string& name, std::vector<Shape> shapes,
                     std::function<TensorD(const std::vector<TensorD>&)> op) {
  return {name, "op", [shapes, op](std::uint64_t seed) {
            Rng rng(seed);
            std::vector<TensorD> xs;
            for (const auto& s : shapes) xs.push_back(input(rng, s));
            return grad_check([&] { return random_projection(op(xs), seed + 1000); }, xs, kGradientStep);
          }};
}

// Parameters are re-drawn around the module's own initialization so that
// biases are nonzero and no ReLU sits exactly at its kink.
template <typename M>
std::vector<TensorD> randomized_params(M& module, Rng& rng) {
  std::vector<TensorD> params;
  module.visit("", [&](const std::string&, TensorD& p) {
    for (D& v : p.data()) v += rng.uniform(-0.1, 0.1);
    p.set_requires_grad(true);
    params.push_back(p);
  });
  return params;
}

template <typename M, typename Init>
GradientCase block_case(const std::string& name, nn::BlockSpec spec, Shape x_shape, Init init) {
  return {name, "block", [spec, x_shape, init](std::uint64_t seed) {
            Rng rng(seed);
            M module(spec);
            init(module, rng);
            auto wrt = randomized_params(module, rng);
            TensorD x = input(rng, x_shape);
            wrt.push_back(x);
            return grad_check([&] { return random_projection(module.forward(x), seed + 1000); }, wrt, kGradientStep);
          }};
}

GradientCase model_case(const std::string& name, const model::ModelConfig& config, std::size_t max_coords) {
  return {name, "model", [config, max_coords](std::uint64_t seed) {
            Rng rng(seed);
            model::DbfemNetwork<D> net(config);
            net.init(rng);
            auto wrt = randomized_params(net, rng);
            const Index batch = 2;
            TensorD g = model::uses_global(config.variant)
                            ? rng.uniform_tensor<D>(config.global_shape(batch), 0.0, 1.0, true)
                            : TensorD();
            TensorD r = model::uses_local(config.variant)
                            ? rng.uniform_tensor<D>(config.region_shape(batch), 0.0, 1.0, true)
                            : TensorD();
            if (g.defined()) wrt.push_back(g);
            if (r.defined()) wrt.push_back(r);
            std::vector<int> labels(static_cast<std::size_t>(batch));
            for (auto& l : labels) l = static_cast<int>(rng.index(static_cast<std::size_t>(config.num_classes)));
            return grad_check([&] { return softmax_cross_entropy(net.forward(g, r), std::span<const int>(labels)); },
                              wrt, kGradientStep, max_coords, seed);
          }};
}

}  // namespace

std::vector<GradientCase> gradient_cases() {
  using V = const std::vector<TensorD>&;
  std::vector<GradientCase> cases;
  const Shape img{2, 3, 6, 5};
  cases.push_back(op_case("conv2d_3x3", {img, {4, 3, 3, 3}, {4}}, [](V x) { return conv2d(x[0], x[1], x[2], {1, 1}); }));
  cases.push_back(op_case("conv2d_3x3_stride2", {img, {4, 3, 3, 3}, {4}},
                          [](V x) { return conv2d(x[0], x[1], x[2], {2, 1}); }));
  cases.push_back(op_case("conv2d_1x1_nobias", {img, {4, 3, 1, 1}},
                          [](V x) { return conv2d(x[0], x[1], TensorD(), {1, 0}); }));
  cases.push_back(op_case("conv2d_7x7_pad3", {{2, 2, 5, 5}, {1, 2, 7, 7}, {1}},
                          [](V x) { return conv2d(x[0], x[1], x[2], {1, 3}); }));
  cases.push_back(op_case("relu", {img}, [](V x) { return relu(x[0]); }));
  cases.push_back(op_case("sigmoid", {img}, [](V x) { return sigmoid(x[0]); }));
  cases.push_back(op_case("add_broadcast", {img, {1, 3, 1, 1}}, [](V x) { return add(x[0], x[1]); }));
  cases.push_back(op_case("mul_broadcast", {img, {2, 1, 6, 5}}, [](V x) { return mul(x[0], x[1]); }));
  cases.push_back(op_case("scale", {img}, [](V x) { return scale(x[0], 0.37); }));
  cases.push_back(op_case("sum", {img}, [](V x) { return sum(x[0]); }));
  cases.push_back(op_case("reshape", {img}, [](V x) { return reshape(x[0], {6, 30}); }));
  cases.push_back(op_case("maxpool2d", {img}, [](V x) { return maxpool2d(x[0], 2, 2); }));
  cases.push_back(op_case("avgpool2d_pad", {img}, [](V x) { return avgpool2d(x[0], 3, 1, 1); }));
  cases.push_back(op_case("adaptive_avg_pool2d", {{2, 3, 7, 5}}, [](V x) { return adaptive_avg_pool2d(x[0], 3, 2); }));
  cases.push_back(op_case("adaptive_max_pool2d", {{2, 3, 7, 5}}, [](V x) { return adaptive_max_pool2d(x[0], 3, 2); }));
  cases.push_back(op_case("channel_mean", {img}, [](V x) { return channel_mean(x[0]); }));
  cases.push_back(op_case("channel_max", {img}, [](V x) { return channel_max(x[0]); }));
  cases.push_back(op_case("concat_channels", {img, {2, 1, 6, 5}}, [](V x) { return concat_channels<D>({x[0], x[1]}); }));
  cases.push_back(op_case("linear", {{3, 5}, {4, 5}, {4}}, [](V x) { return linear(x[0], x[1], x[2]); }));
  cases.push_back({"softmax_cross_entropy", "op", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TensorD logits = rng.uniform_tensor<D>({4, 5}, -3.0, 3.0, true);
                     const std::vector<int> labels{0, 4, 2, 2};
                     return grad_check([&] { return softmax_cross_entropy(logits, std::span<const int>(labels)); },
                                       {logits}, kGradientStep);
                   }});

  auto plain = [](auto& m, Rng& rng) { m.init(rng); };
  auto residual = [](auto& m, Rng& rng) { m.init(rng, 1.0); };
  cases.push_back(block_case<nn::BasicBlock<D>>("BasicBlock", nn::BlockSpec::basic(3, 3), {2, 3, 6, 6}, residual));
  cases.push_back(block_case<nn::BasicBlock<D>>("BasicBlock_projection", nn::BlockSpec::basic(3, 4, 2), {2, 3, 6, 6},
                                                residual));
  cases.push_back(block_case<nn::Bottleneck<D>>("Bottleneck", nn::BlockSpec::bottleneck(8, 8), {2, 8, 5, 5}, residual));
  cases.push_back(block_case<nn::Bottleneck<D>>("Bottleneck_projection", nn::BlockSpec::bottleneck(4, 8, 2),
                                                {2, 4, 6, 6}, residual));
  cases.push_back(block_case<nn::Residual3Block<D>>("Residual3Block", nn::BlockSpec::residual3(3, 4), {2, 3, 5, 5},
                                                    residual));
  cases.push_back(block_case<nn::InceptionModule<D>>("Inception", nn::BlockSpec::inception(3, {2, 3, 2, 2}),
                                                     {2, 3, 5, 5}, plain));
  cases.push_back(block_case<nn::Cbam<D>>("CBAM", nn::BlockSpec::cbam(8, 2), {2, 8, 5, 5}, plain));

  for (auto v : model::kAllVariants) {
    cases.push_back(model_case(std::string("tiny ") + model::label(v), model::ModelConfig::tiny().with_variant(v), 6));
  }
  cases.push_back(
      model_case("desk DBFEM+CAFFM", model::ModelConfig::desk().with_variant(model::Variant::dbfem_caffm), 2));
  return cases;
}

std::vector<GradientResult> run_gradient_suite(const std::vector<GradientCase>& cases, int points,
                                               std::uint64_t base_seed,
                                               const std::function<void(const GradientResult&)>& on_result) {
  std::vector<GradientResult> results;
  for (const auto& c : cases) {
    GradientResult r{c.name, c.kind};
    const auto t0 = std::chrono::steady_clock::now();
    for (int p = 0; p < points; ++p) {
      const GradCheckReport rep = c.run(base_seed + static_cast<std::uint64_t>(p));
      const double err = std::isnan(rep.max_rel_error) ? std::numeric_limits<double>::infinity() : rep.max_rel_error;
      r.max_rel_error = std::max(r.max_rel_error, err);
      r.coordinates += rep.coordinates;
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.passed = r.max_rel_error < kGradientTolerance;
    if (on_result) on_result(r);
    results.push_back(r);
  }
  return results;
}

}  // namespace mer::cli
