#pragma once

#include <array>
#include <string>
#include <vector>

#include "mer/data/manifest.hpp"
#include "mer/model/config.hpp"
#include "mer/tensor/tensor.hpp"

namespace mer::data {

// Output sizes of the face and region crops.
struct CropGeometry {
  Index face_height = 282;
  Index face_width = 231;
  Index region_height = 64;
  Index region_width = 64;

  // Face crops at the model's global input size, regions at its region size.
  static CropGeometry for_model(const model::ModelConfig& config) {
    return {config.global_height, config.global_width, config.region_height, config.region_width};
  }
};

struct FaceCrops {
  Image face;
  std::array<Image, kNumRegions> regions;
};

// Crops the face and the five region boxes and resizes them bilinearly.
// Throws ImageError for degenerate or out-of-bounds boxes.
FaceCrops crop_and_resize(const Image& image, const BBox& face, const std::array<BBox, kNumRegions>& regions,
                          const CropGeometry& geometry = {});

struct Sample {
  std::string id;
  std::string subject;
  Image onset;
  Image apex;
  std::array<Image, kNumRegions> regions;  // cut from the apex frame
  int label = 0;
};

// Builds a sample from full frames using the record's boxes.
Sample make_sample(const ManifestRecord& record, const Image& onset_frame, const Image& apex_frame,
                   const CropGeometry& geometry = {});

// Reads every record's images, in manifest order.
std::vector<Sample> load_samples(const Manifest& manifest, const CropGeometry& geometry = {});

// Dense model inputs: apex face resized to the global input, region crops
// stacked channel-wise in kRegions order.
struct PreparedDataset {
  Shape global_shape;  // C×H×W per sample
  Shape region_shape;  // 5C×h×w per sample
  std::vector<float> global;
  std::vector<float> regions;
  std::vector<int> labels;
  std::vector<std::string> subjects;
  std::vector<std::string> ids;

  std::size_t size() const { return labels.size(); }
  PreparedDataset subset(const std::vector<std::size_t>& indices) const;

  template <typename T>
  Tensor<T> global_batch(const std::vector<std::size_t>& indices) const {
    return gather<T>(global, global_shape, indices);
  }
  template <typename T>
  Tensor<T> region_batch(const std::vector<std::size_t>& indices) const {
    return gather<T>(regions, region_shape, indices);
  }

 private:
  template <typename T>
  static Tensor<T> gather(const std::vector<float>& src, const Shape& per_sample,
                          const std::vector<std::size_t>& indices) {
    const auto stride = static_cast<std::size_t>(numel_of(per_sample));
    std::vector<T> values(stride * indices.size());
    for (std::size_t b = 0; b < indices.size(); ++b) {
      const float* from = src.data() + indices[b] * stride;
      for (std::size_t i = 0; i < stride; ++i) values[b * stride + i] = static_cast<T>(from[i]);
    }
    Shape shape{static_cast<Index>(indices.size())};
    shape.insert(shape.end(), per_sample.begin(), per_sample.end());
    return Tensor<T>::from(shape, std::move(values));
  }
};

// Converts channels and resizes where the samples differ from the model geometry.
PreparedDataset prepare(const std::vector<Sample>& samples, const model::ModelConfig& config);

}  // namespace mer::data
