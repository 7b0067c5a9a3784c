#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mer/tensor/tensor.hpp"

namespace mer::data {

// Planar (C×H×W) float image with values in [0, 1].
struct Image {
  Index channels = 0;
  Index height = 0;
  Index width = 0;
  std::vector<float> pixels;

  static Image blank(Index channels, Index height, Index width, float value = 0.0f) {
    return {channels, height, width,
            std::vector<float>(static_cast<std::size_t>(channels * height * width), value)};
  }
  float at(Index c, Index y, Index x) const { return pixels[static_cast<std::size_t>((c * height + y) * width + x)]; }
  float& at(Index c, Index y, Index x) { return pixels[static_cast<std::size_t>((c * height + y) * width + x)]; }
  bool operator==(const Image&) const = default;
};

// Pixel rectangle: top-left (x, y), extent w × h.
struct BBox {
  Index x = 0, y = 0, w = 0, h = 0;
  bool within(Index image_width, Index image_height) const {
    return x >= 0 && y >= 0 && w > 0 && h > 0 && x + w <= image_width && y + h <= image_height;
  }
  bool operator==(const BBox&) const = default;
};

std::string to_string(const BBox& b);

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws ImageError on zero-area or out-of-bounds boxes.
Image crop(const Image& image, const BBox& box);

// Bilinear resampling with half-pixel centers; equal sizes are the identity
// and constant images stay exactly constant.
Image resize_bilinear(const Image& image, Index out_height, Index out_width);

// Channel conversion: RGB → gray by channel mean, gray → RGB by replication.
Image convert_channels(const Image& image, Index channels);

struct PnmInfo {
  Index channels = 0, height = 0, width = 0;
};

// Binary 8-bit PGM (P5) and PPM (P6).
PnmInfo read_pnm_info(const std::filesystem::path& path);
Image read_pnm(const std::filesystem::path& path);
// Values are clamped to [0, 1] and rounded to the nearest of 256 levels.
void write_pnm(const std::filesystem::path& path, const Image& image);

// Rounds every value to the 8-bit grid that write_pnm stores.
void quantize_8bit(Image& image);

}  // namespace mer::data
