#include "mer/model/dbfem.hpp"

#include <cmath>
#include <stdexcept>

namespace mer::model {

namespace {

std::vector<int> basic_stage_counts(int depth) {
  if (depth == 18) return {2, 2, 2, 2};
  if (depth == 34) return {3, 4, 6, 3};
  return {};
}

Index head_features(const ModelConfig& c) {
  return (c.variant == Variant::gfem || c.variant == Variant::lfem) ? c.fused_channels : 2 * c.fused_channels;
}

}  // namespace

template <typename T>
GlobalBranch<T>::GlobalBranch(const ModelConfig& config)
    : config_(config),
      stem_(config.image_channels, config.stage_widths[0], 3, config.stem_stride, 1),
      proj_(config.stage_widths[3], config.fused_channels, 1) {
  Index in = config.stage_widths[0];
  if (config.resnet_depth == 12) {
    for (Index w : config.stage_widths) {
      resnet12_.emplace_back(nn::BlockSpec::residual3(in, w));
      in = w;
    }
  } else {
    const auto counts = basic_stage_counts(config.resnet_depth);
    for (std::size_t s = 0; s < counts.size(); ++s) {
      for (int b = 0; b < counts[s]; ++b) {
        const Index stride = (s > 0 && b == 0) ? 2 : 1;
        basic_.emplace_back(nn::BlockSpec::basic(in, config.stage_widths[s], stride));
        in = config.stage_widths[s];
      }
    }
  }
}

namespace {

template <typename T>
Tensor<T> standardize(const Tensor<T>& x, const ModelConfig& c) {
  const Tensor<T> shift = Tensor<T>::full(Shape(static_cast<std::size_t>(x.rank()), 1), static_cast<T>(-c.input_mean));
  return scale(add(x, shift), static_cast<T>(1.0 / c.input_std));
}

}  // namespace

template <typename T>
Tensor<T> GlobalBranch<T>::forward(const Tensor<T>& x) const {
  Tensor<T> h = relu(stem_.forward(standardize(x, config_)));
  for (std::size_t i = 0; i < resnet12_.size(); ++i) {
    h = resnet12_[i].forward(h);
    if (i + 1 < resnet12_.size()) h = maxpool2d(h, 2, 2);
  }
  for (const auto& block : basic_) h = block.forward(h);
  return proj_.forward(adaptive_avg_pool2d(h, config_.fusion_grid, config_.fusion_grid));
}

template <typename T>
void GlobalBranch<T>::visit(const std::string& prefix, const nn::ParamVisitor<T>& f) {
  stem_.visit(prefix + "stem.", f);
  for (std::size_t i = 0; i < resnet12_.size(); ++i) resnet12_[i].visit(prefix + "stage" + std::to_string(i) + ".", f);
  for (std::size_t i = 0; i < basic_.size(); ++i) basic_[i].visit(prefix + "block" + std::to_string(i) + ".", f);
  proj_.visit(prefix + "proj.", f);
}

template <typename T>
void GlobalBranch<T>::init(Rng& rng) {
  stem_.init(rng);
  const std::size_t blocks = resnet12_.size() + basic_.size();
  const double residual_scale = 1.0 / std::sqrt(static_cast<double>(blocks));
  for (auto& b : resnet12_) b.init(rng, residual_scale);
  for (auto& b : basic_) b.init(rng, residual_scale);
  proj_.init(rng);
}

template <typename T>
LocalBranch<T>::LocalBranch(const ModelConfig& config)
    : config_(config),
      stem_(config.region_stack_channels(), config.lfem_stem_width, 3, config.lfem_stem_stride, 1) {
  Index in = config.lfem_stem_width;
  for (Index i = 0; i < config.inception_stack_depth; ++i) {
    modules_.emplace_back(nn::BlockSpec::inception(in, config.inception_widths));
    in = modules_.back().out_channels();
  }
  proj_ = nn::Conv2d<T>(in, config.fused_channels, 1);
}

template <typename T>
Tensor<T> LocalBranch<T>::forward(const Tensor<T>& x) const {
  Tensor<T> h = relu(stem_.forward(standardize(x, config_)));
  for (const auto& m : modules_) h = m.forward(h);
  return proj_.forward(adaptive_avg_pool2d(h, config_.fusion_grid, config_.fusion_grid));
}

template <typename T>
void LocalBranch<T>::visit(const std::string& prefix, const nn::ParamVisitor<T>& f) {
  stem_.visit(prefix + "stem.", f);
  for (std::size_t i = 0; i < modules_.size(); ++i) modules_[i].visit(prefix + "inception" + std::to_string(i) + ".", f);
  proj_.visit(prefix + "proj.", f);
}

template <typename T>
void LocalBranch<T>::init(Rng& rng) {
  stem_.init(rng);
  for (auto& m : modules_) m.init(rng);
  proj_.init(rng);
}

template <typename T>
CbamStack<T>::CbamStack(Index channels, Index reduction) {
  for (int i = 0; i < 3; ++i) first_.emplace_back(nn::BlockSpec::cbam(channels, reduction));
  for (int i = 0; i < 2; ++i) second_.emplace_back(nn::BlockSpec::cbam(channels, reduction));
}

template <typename T>
Tensor<T> CbamStack<T>::forward(const Tensor<T>& z0, Trace* trace) const {
  Tensor<T> z1 = z0;
  for (const auto& c : first_) z1 = c.forward(z1);
  Tensor<T> z2 = add(relu(z1), z0);
  Tensor<T> z3 = z2;
  for (const auto& c : second_) z3 = c.forward(z3);
  if (trace) *trace = {z0, z1, z2, z3};
  return z3;
}

template <typename T>
void CbamStack<T>::visit(const std::string& prefix, const nn::ParamVisitor<T>& f) {
  for (std::size_t i = 0; i < first_.size(); ++i) first_[i].visit(prefix + "cbam" + std::to_string(i) + ".", f);
  for (std::size_t i = 0; i < second_.size(); ++i) {
    second_[i].visit(prefix + "cbam" + std::to_string(first_.size() + i) + ".", f);
  }
}

template <typename T>
void CbamStack<T>::init(Rng& rng) {
  for (auto& c : first_) c.init(rng);
  for (auto& c : second_) c.init(rng);
}

template <typename T>
DbfemNetwork<T>::DbfemNetwork(ModelConfig config) : config_(std::move(config)) {
  validate(config_);
  if (uses_global(config_.variant)) gfem_ = std::make_unique<GlobalBranch<T>>(config_);
  if (uses_local(config_.variant)) lfem_ = std::make_unique<LocalBranch<T>>(config_);
  switch (config_.variant) {
    case Variant::dbfem_caffm:
      attention_ = std::make_unique<CbamStack<T>>(2 * config_.fused_channels, config_.cbam_reduction);
      break;
    case Variant::dbfem_caffm_l:
    case Variant::dbfem_caffm_g:
      attention_ = std::make_unique<CbamStack<T>>(config_.fused_channels, config_.cbam_reduction);
      break;
    default:
      break;
  }
  head_ = nn::Linear<T>(head_features(config_), config_.num_classes);
}

template <typename T>
void DbfemNetwork<T>::init(Rng& rng) {
  // Fixed sub-streams keep each part's initialization independent of which
  // other parts exist in the variant.
  if (gfem_) {
    Rng r = rng.fork(1);
    gfem_->init(r);
  }
  if (lfem_) {
    Rng r = rng.fork(2);
    lfem_->init(r);
  }
  if (attention_) {
    Rng r = rng.fork(3);
    attention_->init(r);
  }
  Rng r = rng.fork(4);
  if (config_.zero_init_head) {
    head_.zero();
  } else {
    head_.init(r);
  }
}

template <typename T>
void DbfemNetwork<T>::check_input(const Tensor<T>& x, const Shape& expected, const char* what) const {
  if (!x.defined()) {
    throw ShapeError(std::string(label(config_.variant)) + " needs a " + what + " input");
  }
  if (x.rank() != 4 || x.dim(1) != expected[1] || x.dim(2) != expected[2] || x.dim(3) != expected[3]) {
    Shape want = expected;
    if (x.rank() > 0) want[0] = x.dim(0);
    throw ShapeError(std::string(label(config_.variant)) + ": " + what + " input " + mer::to_string(x.shape()) +
                     " does not match configured " + mer::to_string(want));
  }
}

template <typename T>
Tensor<T> DbfemNetwork<T>::gfem_forward(const Tensor<T>& global_img) const {
  if (!gfem_) throw std::logic_error(std::string(label(config_.variant)) + " has no global branch");
  check_input(global_img, config_.global_shape(1), "global image");
  return gfem_->forward(global_img);
}

template <typename T>
Tensor<T> DbfemNetwork<T>::lfem_forward(const Tensor<T>& region_stack) const {
  if (!lfem_) throw std::logic_error(std::string(label(config_.variant)) + " has no local branch");
  check_input(region_stack, config_.region_shape(1), "region stack");
  return lfem_->forward(region_stack);
}

template <typename T>
Tensor<T> DbfemNetwork<T>::caffm_fuse(const Tensor<T>& f_g, const Tensor<T>& f_l, FusionTrace* trace) const {
  if (f_g.shape() != f_l.shape()) {
    throw ShapeError("caffm_fuse: branch features " + mer::to_string(f_g.shape()) + " and " +
                     mer::to_string(f_l.shape()) + " are not aligned");
  }
  switch (config_.variant) {
    case Variant::dbfem_caffm:
      return maxpool2d(relu(attention_->forward(concat_channels<T>({f_g, f_l}), trace)), 2, 2);
    case Variant::dbfem_caffm_l:
      return maxpool2d(concat_channels<T>({f_g, relu(attention_->forward(f_l, trace))}), 2, 2);
    case Variant::dbfem_caffm_g:
      return maxpool2d(concat_channels<T>({relu(attention_->forward(f_g, trace)), f_l}), 2, 2);
    case Variant::dbfem:
      return concat_channels<T>({f_g, f_l});
    default:
      throw std::logic_error(std::string(label(config_.variant)) + " does not fuse two branches");
  }
}

template <typename T>
Tensor<T> DbfemNetwork<T>::head(const Tensor<T>& features) const {
  const Index n = features.dim(0), c = features.dim(1);
  return head_.forward(reshape(adaptive_avg_pool2d(features, 1, 1), {n, c}));
}

template <typename T>
Tensor<T> DbfemNetwork<T>::forward(const Tensor<T>& global_img, const Tensor<T>& region_stack) const {
  switch (config_.variant) {
    case Variant::gfem:
      return head(gfem_forward(global_img));
    case Variant::lfem:
      return head(lfem_forward(region_stack));
    default: {
      if (global_img.defined() && region_stack.defined() && global_img.dim(0) != region_stack.dim(0)) {
        throw ShapeError("global batch " + std::to_string(global_img.dim(0)) + " differs from region batch " +
                         std::to_string(region_stack.dim(0)));
      }
      return head(caffm_fuse(gfem_forward(global_img), lfem_forward(region_stack)));
    }
  }
}

template <typename T>
void DbfemNetwork<T>::visit(const std::string& prefix, const nn::ParamVisitor<T>& f) {
  if (gfem_) gfem_->visit(prefix + "gfem.", f);
  if (lfem_) lfem_->visit(prefix + "lfem.", f);
  if (attention_) attention_->visit(prefix + "caffm.", f);
  head_.visit(prefix + "head.", f);
}

template <typename T>
std::vector<Tensor<T>> DbfemNetwork<T>::parameters() {
  return nn::parameters_of<T>(*this);
}

template <typename T>
Index DbfemNetwork<T>::parameter_count() {
  return nn::count_parameters<T>(*this);
}

template class GlobalBranch<float>;
template class GlobalBranch<double>;
template class LocalBranch<float>;
template class LocalBranch<double>;
template class CbamStack<float>;
template class CbamStack<double>;
template class DbfemNetwork<float>;
template class DbfemNetwork<double>;

}  // namespace mer::model
