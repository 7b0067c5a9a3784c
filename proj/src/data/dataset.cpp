#include "mer/data/dataset.hpp"

#include <stdexcept>

namespace mer::data {

namespace {

Image fit(const Image& img, Index channels, Index height, Index width) {
  Image out = convert_channels(img, channels);
  if (out.height != height || out.width != width) out = resize_bilinear(out, height, width);
  return out;
}

}  // namespace

FaceCrops crop_and_resize(const Image& image, const BBox& face, const std::array<BBox, kNumRegions>& regions,
                          const CropGeometry& geometry) {
  FaceCrops out;
  out.face = resize_bilinear(crop(image, face), geometry.face_height, geometry.face_width);
  for (std::size_t i = 0; i < kNumRegions; ++i) {
    out.regions[i] = resize_bilinear(crop(image, regions[i]), geometry.region_height, geometry.region_width);
  }
  return out;
}

Sample make_sample(const ManifestRecord& record, const Image& onset_frame, const Image& apex_frame,
                   const CropGeometry& geometry) {
  Sample s;
  s.id = record.sample_id;
  s.subject = record.subject;
  s.label = static_cast<int>(merge_label(record.raw_label));
  FaceCrops apex = crop_and_resize(apex_frame, record.face_bbox, record.resolved_regions(), geometry);
  s.apex = std::move(apex.face);
  s.regions = std::move(apex.regions);
  s.onset = resize_bilinear(crop(onset_frame, record.face_bbox), geometry.face_height, geometry.face_width);
  return s;
}

std::vector<Sample> load_samples(const Manifest& manifest, const CropGeometry& geometry) {
  std::vector<Sample> out;
  out.reserve(manifest.size());
  for (const auto& record : manifest.records) {
    try {
      out.push_back(make_sample(record, read_pnm(manifest.resolve(record.onset_path)),
                                read_pnm(manifest.resolve(record.apex_path)), geometry));
    } catch (const ImageError& e) {
      throw ImageError("sample '" + record.sample_id + "': " + e.what());
    }
  }
  return out;
}

PreparedDataset PreparedDataset::subset(const std::vector<std::size_t>& indices) const {
  PreparedDataset out;
  out.global_shape = global_shape;
  out.region_shape = region_shape;
  const auto gs = static_cast<std::size_t>(numel_of(global_shape));
  const auto rs = static_cast<std::size_t>(numel_of(region_shape));
  for (std::size_t i : indices) {
    if (i >= size()) throw std::out_of_range("subset index " + std::to_string(i) + " out of range");
    out.global.insert(out.global.end(), global.begin() + static_cast<std::ptrdiff_t>(i * gs),
                      global.begin() + static_cast<std::ptrdiff_t>((i + 1) * gs));
    out.regions.insert(out.regions.end(), regions.begin() + static_cast<std::ptrdiff_t>(i * rs),
                       regions.begin() + static_cast<std::ptrdiff_t>((i + 1) * rs));
    out.labels.push_back(labels[i]);
    out.subjects.push_back(subjects[i]);
    out.ids.push_back(ids[i]);
  }
  return out;
}

PreparedDataset prepare(const std::vector<Sample>& samples, const model::ModelConfig& config) {
  PreparedDataset out;
  const Index ch = config.image_channels;
  out.global_shape = {ch, config.global_height, config.global_width};
  out.region_shape = {config.region_stack_channels(), config.region_height, config.region_width};
  out.global.reserve(samples.size() * static_cast<std::size_t>(numel_of(out.global_shape)));
  out.regions.reserve(samples.size() * static_cast<std::size_t>(numel_of(out.region_shape)));
  for (const auto& s : samples) {
    const Image g = fit(s.apex, ch, config.global_height, config.global_width);
    out.global.insert(out.global.end(), g.pixels.begin(), g.pixels.end());
    for (const auto& region : s.regions) {
      const Image r = fit(region, ch, config.region_height, config.region_width);
      out.regions.insert(out.regions.end(), r.pixels.begin(), r.pixels.end());
    }
    out.labels.push_back(s.label);
    out.subjects.push_back(s.subject);
    out.ids.push_back(s.id);
  }
  return out;
}

}  // namespace mer::data
