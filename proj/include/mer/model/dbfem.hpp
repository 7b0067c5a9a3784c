#pragma once

// Dual-branch network: a ResNet global branch (GFEM) and an Inception local
// branch (LFEM), each pooled to a common grid and projected to C channels,
// fused by a stack of CBAM modules (CAFFM) and classified by a linear head.

#include <memory>
#include <string>
#include <vector>

#include "mer/model/config.hpp"
#include "mer/nn/blocks.hpp"

namespace mer::model {

template <typename T>
class GlobalBranch {
 public:
  explicit GlobalBranch(const ModelConfig& config);
  // N×ch×H×W image -> F_G, N×C×g×g.
  Tensor<T> forward(const Tensor<T>& x) const;
  void visit(const std::string& prefix, const nn::ParamVisitor<T>& f);
  void init(Rng& rng);

 private:
  ModelConfig config_;
  nn::Conv2d<T> stem_;
  std::vector<nn::Residual3Block<T>> resnet12_;
  std::vector<nn::BasicBlock<T>> basic_;
  nn::Conv2d<T> proj_;
};

template <typename T>
class LocalBranch {
 public:
  explicit LocalBranch(const ModelConfig& config);
  // N×(5·ch)×h×w region stack -> F_L, N×C×g×g.
  Tensor<T> forward(const Tensor<T>& x) const;
  void visit(const std::string& prefix, const nn::ParamVisitor<T>& f);
  void init(Rng& rng);

 private:
  ModelConfig config_;
  nn::Conv2d<T> stem_;
  std::vector<nn::InceptionModule<T>> modules_;
  nn::Conv2d<T> proj_;
};

// Three CBAMs, ReLU plus residual to the stack input, then two more CBAMs.
// Returns the pre-activation output of the last CBAM.
template <typename T>
class CbamStack {
 public:
  CbamStack(Index channels, Index reduction);
  struct Trace {
    Tensor<T> z0, z1, z2, z3;
  };
  Tensor<T> forward(const Tensor<T>& z0, Trace* trace = nullptr) const;
  void visit(const std::string& prefix, const nn::ParamVisitor<T>& f);
  void init(Rng& rng);

 private:
  std::vector<nn::Cbam<T>> first_;
  std::vector<nn::Cbam<T>> second_;
};

template <typename T>
class DbfemNetwork {
 public:
  using FusionTrace = typename CbamStack<T>::Trace;

  explicit DbfemNetwork(ModelConfig config);

  // Seeded initialization of every parameter.
  void init(Rng& rng);

  // Logits N×num_classes. Either input may be undefined when the variant
  // does not use that branch.
  Tensor<T> forward(const Tensor<T>& global_img, const Tensor<T>& region_stack) const;

  Tensor<T> gfem_forward(const Tensor<T>& global_img) const;
  Tensor<T> lfem_forward(const Tensor<T>& region_stack) const;
  // Fused map fed to the head: N×2C×g'×g' for fusing variants.
  Tensor<T> caffm_fuse(const Tensor<T>& f_g, const Tensor<T>& f_l, FusionTrace* trace = nullptr) const;

  void visit(const std::string& prefix, const nn::ParamVisitor<T>& f);
  std::vector<Tensor<T>> parameters();
  Index parameter_count();
  const ModelConfig& config() const { return config_; }

 private:
  Tensor<T> head(const Tensor<T>& features) const;
  void check_input(const Tensor<T>& x, const Shape& expected, const char* what) const;

  ModelConfig config_;
  std::unique_ptr<GlobalBranch<T>> gfem_;
  std::unique_ptr<LocalBranch<T>> lfem_;
  std::unique_ptr<CbamStack<T>> attention_;
  nn::Linear<T> head_;
};

}  // namespace mer::model
